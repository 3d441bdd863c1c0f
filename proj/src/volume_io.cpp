#include "osseg/volume_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace osseg {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'L', '1'};
constexpr char kCheckpointMagic[4] = {'O', 'C', 'K', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  std::uint64_t offset() const { return offset_; }

  void need(std::uint64_t n, const char* what) {
    if (offset_ + n > data_.size())
      throw FormatError(path_ + ": truncated while reading " + std::string(what), offset_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(data_[offset_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[offset_ + i])) << (8 * i);
    offset_ += 4;
    return v;
  }
  const char* raw(std::uint64_t n, const char* what) {
    need(n, what);
    const char* p = data_.data() + offset_;
    offset_ += n;
    return p;
  }
  void expect_end() {
    if (offset_ != data_.size())
      throw FormatError(path_ + ": trailing bytes after payload", offset_);
  }

 private:
  std::string data_;
  std::string path_;
  std::uint64_t offset_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'", 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void spit(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

std::string volume_header(int dtype, const Shape& shape) {
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(shape.size()));
  for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
  return out;
}

}  // namespace

void write_volume(const std::string& path, const Volume& v) {
  std::string out = volume_header(0, v.shape());
  const std::size_t bytes = static_cast<std::size_t>(v.size()) * sizeof(float);
  out.resize(out.size() + bytes);
  std::memcpy(out.data() + out.size() - bytes, v.data(), bytes);
  spit(path, out);
}

void write_labels(const std::string& path, const LabelMap& y) {
  require(y.num_classes() <= 65536, "label map exceeds uint16 range");
  std::string out = volume_header(1, y.shape());
  for (std::int64_t i = 0; i < y.size(); ++i) {
    const std::uint16_t v = static_cast<std::uint16_t>(y[i]);
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
  }
  spit(path, out);
}

LoadedVolume read_volume_file(const std::string& path) {
  Reader r(slurp(path), path);
  const char* magic = r.raw(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic", 0);
  const int dtype = r.u8("dtype");
  if (dtype != 0 && dtype != 1)
    throw FormatError(path + ": unknown dtype code " + std::to_string(dtype), r.offset() - 1);
  const int rank = r.u8("rank");
  if (rank < 1 || rank > 3)
    throw FormatError(path + ": unsupported rank " + std::to_string(rank), r.offset() - 1);
  Shape shape;
  for (int d = 0; d < rank; ++d) {
    const std::uint32_t v = r.u32("dims");
    if (v == 0) throw FormatError(path + ": zero-sized dimension", r.offset() - 4);
    shape.push_back(static_cast<int>(v));
  }
  const std::uint64_t n = static_cast<std::uint64_t>(numel(shape));

  if (dtype == 0) {
    const char* payload = r.raw(n * sizeof(float), "float payload");
    r.expect_end();
    std::vector<float> values(n);
    std::memcpy(values.data(), payload, n * sizeof(float));
    return Volume(shape, std::move(values));
  }
  const char* payload = r.raw(n * sizeof(std::uint16_t), "uint16 payload");
  r.expect_end();
  std::vector<std::int32_t> values(n);
  std::int32_t max_v = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint16_t lo = static_cast<std::uint8_t>(payload[2 * i]);
    const std::uint16_t hi = static_cast<std::uint8_t>(payload[2 * i + 1]);
    values[i] = static_cast<std::int32_t>(lo | (hi << 8));
    max_v = std::max(max_v, values[i]);
  }
  return LabelMap(shape, max_v + 1, std::move(values));
}

Volume read_volume(const std::string& path) {
  auto loaded = read_volume_file(path);
  if (auto* v = std::get_if<Volume>(&loaded)) return std::move(*v);
  throw FormatError(path + ": expected a float volume, found a label map", 4);
}

LabelMap read_labels(const std::string& path) {
  auto loaded = read_volume_file(path);
  if (auto* y = std::get_if<LabelMap>(&loaded)) return std::move(*y);
  throw FormatError(path + ": expected a label map, found a float volume", 4);
}

// ---- train config text --------------------------------------------------------

std::string train_config_text(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "n_iterations = " << cfg.n_iterations << "\n";
  os << "lr_initial = " << cfg.lr_initial << "\n";
  os << "weight_decay = " << cfg.weight_decay << "\n";
  os << "momentum = " << cfg.momentum << "\n";
  os << "warmup_epochs = " << cfg.warmup_epochs << "\n";
  os << "lambda_smooth = " << cfg.weights.lambda_smooth << "\n";
  os << "lambda_dice = " << cfg.weights.lambda_dice << "\n";
  os << "lambda_kl = " << cfg.weights.lambda_kl << "\n";
  os << "lambda_rec = " << cfg.weights.lambda_rec << "\n";
  os << "ramp_length = " << cfg.ramp_length << "\n";
  os << "inversion_iters = " << cfg.inversion_iters << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "checkpoint_every = " << cfg.checkpoint_every << "\n";
  os << "early_stop_patience = " << cfg.early_stop_patience << "\n";
  os << "eval_every = " << cfg.eval_every << "\n";
  os << "levels = " << cfg.levels << "\n";
  os << "base_channels = " << cfg.base_channels << "\n";
  os << "freeze_reg_after = " << cfg.freeze_reg_after << "\n";
  os << "dual_consistency = " << (cfg.dual_consistency ? 1 : 0) << "\n";
  os << "variant = " << variant_name(cfg.variant) << "\n";
  return os.str();
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            "config line " + std::to_string(line_no) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    try {
      if (key == "n_iterations") cfg.n_iterations = std::stoi(value);
      else if (key == "lr_initial") cfg.lr_initial = std::stod(value);
      else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
      else if (key == "momentum") cfg.momentum = std::stod(value);
      else if (key == "warmup_epochs") cfg.warmup_epochs = std::stoi(value);
      else if (key == "lambda_smooth") cfg.weights.lambda_smooth = std::stod(value);
      else if (key == "lambda_dice") cfg.weights.lambda_dice = std::stod(value);
      else if (key == "lambda_kl") cfg.weights.lambda_kl = std::stod(value);
      else if (key == "lambda_rec") cfg.weights.lambda_rec = std::stod(value);
      else if (key == "ramp_length") cfg.ramp_length = std::stoi(value);
      else if (key == "inversion_iters") cfg.inversion_iters = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(value);
      else if (key == "early_stop_patience") cfg.early_stop_patience = std::stoi(value);
      else if (key == "eval_every") cfg.eval_every = std::stoi(value);
      else if (key == "levels") cfg.levels = std::stoi(value);
      else if (key == "base_channels") cfg.base_channels = std::stoi(value);
      else if (key == "freeze_reg_after") cfg.freeze_reg_after = std::stoi(value);
      else if (key == "dual_consistency") cfg.dual_consistency = std::stoi(value) != 0;
      else if (key == "variant") cfg.variant = variant_from_name(value);
      else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("bad value for config key '" + key + "': " + value);
    }
  }
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  return parse_train_config(slurp(path));
}

// ---- checkpoints ----------------------------------------------------------------

namespace {

void put_params(std::string& out, const std::vector<std::pair<std::string, Tensor>>& params) {
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const std::size_t bytes = static_cast<std::size_t>(t.size()) * sizeof(float);
    out.resize(out.size() + bytes);
    std::memcpy(out.data() + out.size() - bytes, t.data(), bytes);
  }
}

std::vector<std::pair<std::string, Tensor>> get_params(Reader& r) {
  std::vector<std::pair<std::string, Tensor>> out;
  const std::uint32_t count = r.u32("param count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    const char* name = r.raw(name_len, "name");
    const std::uint32_t rank = r.u32("tensor rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<int>(r.u32("tensor dims")));
    const std::uint64_t n = static_cast<std::uint64_t>(numel(shape));
    const char* payload = r.raw(n * sizeof(float), "tensor payload");
    std::vector<float> values(n);
    std::memcpy(values.data(), payload, n * sizeof(float));
    out.emplace_back(std::string(name, name_len), Tensor(shape, std::move(values)));
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> snapshot(const ParamStore& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, p] : params.entries()) out.emplace_back(name, p->value);
  return out;
}

}  // namespace

Checkpoint checkpoint_of(const TrainState& state) {
  Checkpoint ck;
  ck.spatial_rank = state.seg.config().spatial_rank;
  ck.num_classes = state.seg.config().out_channels;
  ck.levels = state.seg.config().levels;
  ck.base_channels = state.seg.config().base_channels;
  ck.iteration = state.iteration;
  ck.reg = snapshot(state.reg.params());
  ck.adv = snapshot(state.adv.params());
  ck.seg = snapshot(state.seg.params());
  return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::string out(kCheckpointMagic, 4);
  put_u32(out, 1);  // version
  put_u32(out, static_cast<std::uint32_t>(ck.spatial_rank));
  put_u32(out, static_cast<std::uint32_t>(ck.num_classes));
  put_u32(out, static_cast<std::uint32_t>(ck.levels));
  put_u32(out, static_cast<std::uint32_t>(ck.base_channels));
  put_u32(out, static_cast<std::uint32_t>(ck.iteration));
  put_params(out, ck.reg);
  put_params(out, ck.adv);
  put_params(out, ck.seg);
  spit(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
  Reader r(slurp(path), path);
  const char* magic = r.raw(4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError(path + ": bad checkpoint magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version), 4);
  Checkpoint ck;
  ck.spatial_rank = static_cast<int>(r.u32("rank"));
  ck.num_classes = static_cast<int>(r.u32("classes"));
  ck.levels = static_cast<int>(r.u32("levels"));
  ck.base_channels = static_cast<int>(r.u32("base channels"));
  ck.iteration = static_cast<int>(r.u32("iteration"));
  ck.reg = get_params(r);
  ck.adv = get_params(r);
  ck.seg = get_params(r);
  r.expect_end();
  return ck;
}

void load_params(ParamStore& params, const std::vector<std::pair<std::string, Tensor>>& values) {
  const auto& entries = params.entries();
  require(entries.size() == values.size(), "checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    require(entries[i].first == values[i].first,
            "checkpoint parameter name mismatch at '" + values[i].first + "'");
    require(entries[i].second->value.shape() == values[i].second.shape(),
            "checkpoint parameter shape mismatch at '" + values[i].first + "'");
    entries[i].second->value = values[i].second;
  }
}

SegmentationNet segmenter_from_checkpoint(const Checkpoint& ck) {
  EncoderDecoderConfig cfg;
  cfg.spatial_rank = ck.spatial_rank;
  cfg.levels = ck.levels;
  cfg.base_channels = ck.base_channels;
  cfg.out_channels = ck.num_classes;
  SegmentationNet seg(cfg, 0);
  load_params(seg.params(), ck.seg);
  return seg;
}

void restore_train_state(TrainState& state, const Checkpoint& ck) {
  load_params(state.reg.params(), ck.reg);
  load_params(state.adv.params(), ck.adv);
  load_params(state.seg.params(), ck.seg);
  state.iteration = ck.iteration;
}

}  // namespace osseg
