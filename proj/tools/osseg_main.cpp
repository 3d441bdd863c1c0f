// Command-line surface: phantom generation, training, segmentation inference,
// Dice evaluation, ablations and the data-scarcity sweep.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "osseg/ablation.hpp"
#include "osseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace osseg;

namespace {

struct DataDir {
  Atlas atlas;
  std::vector<Volume> unlabeled;
  std::vector<std::pair<Volume, LabelMap>> heldout;
};

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& suffix) {
  std::vector<fs::path> files;
  if (!fs::exists(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void write_cohort(const fs::path& dir, const Cohort& cohort) {
  fs::create_directories(dir / "unlabeled");
  fs::create_directories(dir / "heldout");
  write_volume((dir / "atlas_image.avl").string(), cohort.atlas.image);
  write_labels((dir / "atlas_labels.avl").string(), cohort.atlas.labels);
  for (std::size_t i = 0; i < cohort.unlabeled.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "u%03zu.avl", i);
    write_volume((dir / "unlabeled" / name).string(), cohort.unlabeled[i]);
  }
  for (std::size_t i = 0; i < cohort.heldout.size(); ++i) {
    char img[32], lab[32];
    std::snprintf(img, sizeof(img), "h%03zu_image.avl", i);
    std::snprintf(lab, sizeof(lab), "h%03zu_labels.avl", i);
    write_volume((dir / "heldout" / img).string(), cohort.heldout[i].first);
    write_labels((dir / "heldout" / lab).string(), cohort.heldout[i].second);
  }
  std::ofstream manifest(dir / "manifest.json");
  manifest << cohort.manifest;
}

DataDir load_data_dir(const fs::path& dir) {
  DataDir data;
  data.atlas = Atlas(read_volume((dir / "atlas_image.avl").string()),
                     read_labels((dir / "atlas_labels.avl").string()));
  for (const auto& path : sorted_files(dir / "unlabeled", ".avl"))
    data.unlabeled.push_back(read_volume(path.string()));
  const auto images = sorted_files(dir / "heldout", "_image.avl");
  for (const auto& img : images) {
    std::string lab = img.string();
    lab.replace(lab.size() - 10, 10, "_labels.avl");
    data.heldout.emplace_back(read_volume(img.string()), read_labels(lab));
  }
  require(!data.unlabeled.empty(), "no unlabeled volumes under " + dir.string());

  // label counts must cover every heldout map for Dice to be comparable
  int classes = data.atlas.labels.num_classes();
  for (const auto& [v, l] : data.heldout) classes = std::max(classes, l.num_classes());
  if (classes != data.atlas.labels.num_classes()) {
    std::vector<std::int32_t> values(data.atlas.labels.data(),
                                     data.atlas.labels.data() + data.atlas.labels.size());
    data.atlas.labels = LabelMap(data.atlas.labels.shape(), classes, std::move(values));
  }
  for (auto& [v, l] : data.heldout)
    if (l.num_classes() != classes) {
      std::vector<std::int32_t> values(l.data(), l.data() + l.size());
      l = LabelMap(l.shape(), classes, std::move(values));
    }
  return data;
}

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const std::string token =
        list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!token.empty()) tokens.push_back(token);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return tokens;
}

std::vector<Variant> parse_variants(const std::string& list) {
  std::vector<Variant> variants;
  for (const auto& token : split_list(list)) variants.push_back(variant_from_name(token));
  require(!variants.empty(), "empty variant list");
  return variants;
}

std::vector<int> parse_counts(const std::string& list) {
  std::vector<int> counts;
  for (const auto& token : split_list(list)) counts.push_back(std::stoi(token));
  require(!counts.empty(), "empty counts list");
  return counts;
}

int cmd_gen_phantoms(const fs::path& out, int size, int rank, int classes, int n_unlabeled,
                     int n_heldout, std::uint64_t seed, double amp, double lesion_rate) {
  PhantomSpec spec;
  spec.spatial_rank = rank;
  spec.size = Shape(static_cast<std::size_t>(rank), size);
  spec.num_structures = classes;
  spec.deform_amplitude = amp;
  spec.lesion_rate = lesion_rate;
  spec.seed = seed;
  Cohort cohort = make_cohort(spec, n_unlabeled, n_heldout);
  write_cohort(out, cohort);
  std::cout << "wrote cohort: atlas + " << cohort.unlabeled.size() << " unlabeled + "
            << cohort.heldout.size() << " heldout to " << out << "\n";
  return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& data, const fs::path& out) {
  TrainConfig cfg = load_train_config(config_path.string());
  DataDir d = load_data_dir(data);
  fs::create_directories(out);
  std::ofstream metrics(out / "metrics.jsonl");

  TrainHooks hooks;
  hooks.on_metrics = [&metrics](const IterationMetrics& m) {
    metrics << m.to_json_line() << "\n";
  };
  hooks.on_checkpoint = [&out](const TrainState& state, int iteration) {
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_%06d.ock", iteration);
    write_checkpoint((out / name).string(), checkpoint_of(state));
  };

  TrainState state = train(cfg, d.atlas, d.unlabeled, d.heldout, hooks);
  write_checkpoint((out / "checkpoint_final.ock").string(), checkpoint_of(state));
  std::ofstream echo(out / "config.txt");
  echo << train_config_text(cfg);

  const double dice = d.heldout.empty() ? -1.0 : validation_dice(state.seg, d.heldout);
  std::cout << "trained " << variant_name(cfg.variant) << " for " << state.history.size()
            << " iterations";
  if (dice >= 0.0) std::cout << ", heldout mean dice " << dice;
  std::cout << (state.stopped_early ? " (early stop)" : "") << "\n";
  return 0;
}

int cmd_segment(const fs::path& checkpoint, const fs::path& in, const fs::path& out) {
  Checkpoint ck = read_checkpoint(checkpoint.string());
  SegmentationNet seg = segmenter_from_checkpoint(ck);
  Volume image = read_volume(in.string());
  Prediction pred = segment(seg, image);
  write_labels(out.string(), argmax_labels(pred.probs()));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& report_path) {
  const auto preds = sorted_files(pred_dir, ".avl");
  require(!preds.empty(), "no predictions under " + pred_dir.string());
  std::vector<DiceResult> rows;
  for (const auto& p : preds) {
    const fs::path gt = gt_dir / p.filename();
    require(fs::exists(gt), "missing ground truth for " + p.filename().string());
    LabelMap pl = read_labels(p.string());
    LabelMap gl = read_labels(gt.string());
    const int classes = std::max(pl.num_classes(), gl.num_classes());
    if (pl.num_classes() != classes)
      pl = LabelMap(pl.shape(), classes,
                    std::vector<std::int32_t>(pl.data(), pl.data() + pl.size()));
    if (gl.num_classes() != classes)
      gl = LabelMap(gl.shape(), classes,
                    std::vector<std::int32_t>(gl.data(), gl.data() + gl.size()));
    rows.push_back(dice_score(pl, gl));
  }
  EvalReport report = aggregate_dice(rows);
  std::ofstream out(report_path);
  out << report.to_json();
  std::cout << report.to_table();
  return 0;
}

int cmd_ablation(const fs::path& config_path, const fs::path& data, const std::string& variants,
                 const fs::path& out) {
  TrainConfig cfg =
      config_path.empty() ? TrainConfig{} : load_train_config(config_path.string());
  DataDir d = load_data_dir(data);
  Cohort cohort;
  cohort.atlas = std::move(d.atlas);
  cohort.unlabeled = std::move(d.unlabeled);
  cohort.heldout = std::move(d.heldout);

  fs::create_directories(out);
  auto results = run_ablation(cfg, cohort, parse_variants(variants));
  std::sort(results.begin(), results.end(),
            [](const AblationResult& a, const AblationResult& b) {
              return a.report.mean > b.report.mean;
            });
  std::ofstream all(out / "ablation.json");
  all << "[\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::ofstream one(out / (variant_name(results[i].variant) + ".json"));
    one << results[i].to_json();
    all << results[i].to_json() << (i + 1 < results.size() ? ",\n" : "\n");
    std::cout << variant_name(results[i].variant) << ": mean dice " << results[i].report.mean
              << " (config " << results[i].config_hash << ")\n";
  }
  all << "]\n";

  // trend-level sanity: the full pipeline should beat the plain one
  const AblationResult* vanilla = nullptr;
  const AblationResult* full = nullptr;
  for (const auto& r : results) {
    if (r.variant == Variant::Vanilla) vanilla = &r;
    if (r.variant == Variant::AdvLer) full = &r;
  }
  if (vanilla && full)
    std::cout << "ordering vanilla < adv+ler: "
              << (vanilla->report.mean < full->report.mean ? "OK" : "VIOLATED") << "\n";
  return 0;
}

int cmd_scarcity(const fs::path& config_path, const fs::path& data, const std::string& variants,
                 const std::string& counts, const fs::path& out) {
  TrainConfig cfg =
      config_path.empty() ? TrainConfig{} : load_train_config(config_path.string());
  DataDir d = load_data_dir(data);
  Cohort cohort;
  cohort.atlas = std::move(d.atlas);
  cohort.unlabeled = std::move(d.unlabeled);
  cohort.heldout = std::move(d.heldout);

  fs::create_directories(out);
  auto points = run_scarcity(cfg, cohort, parse_variants(variants), parse_counts(counts));
  std::ofstream report(out / "scarcity.json");
  report << scarcity_to_json(points);
  for (const auto& p : points)
    std::cout << variant_name(p.variant) << " @ " << p.unlabeled_count
              << " unlabeled: mean dice " << p.mean_dice << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"one-shot atlas-based segmentation pipeline"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-phantoms", "generate a labeled phantom cohort");
  std::string gen_out;
  int gen_size = 32, gen_rank = 3, gen_classes = 9, gen_unlabeled = 20, gen_heldout = 8;
  std::uint64_t gen_seed = 0;
  double gen_amp = 5.0, gen_lesion = 0.35;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--size", gen_size, "per-axis voxels");
  gen->add_option("--rank", gen_rank, "spatial rank (2 or 3)")->check(CLI::IsMember({2, 3}));
  gen->add_option("--classes", gen_classes, "number of structures incl. background");
  gen->add_option("--count-unlabeled", gen_unlabeled, "unlabeled training subjects");
  gen->add_option("--count-heldout", gen_heldout, "held-out labeled subjects");
  gen->add_option("--seed", gen_seed, "cohort seed");
  gen->add_option("--deform-amplitude", gen_amp, "peak deformation in voxels");
  gen->add_option("--lesion-rate", gen_lesion, "image-only lesion probability");

  auto* tr = app.add_subcommand("train", "train the pipeline on a cohort");
  std::string tr_config, tr_data, tr_out;
  tr->add_option("--config", tr_config, "train config file")->required();
  tr->add_option("--data", tr_data, "cohort directory")->required();
  tr->add_option("--out", tr_out, "output directory")->required();

  auto* sg = app.add_subcommand("segment", "segment one volume with a checkpoint");
  std::string sg_ck, sg_in, sg_out;
  sg->add_option("--checkpoint", sg_ck, "checkpoint file")->required();
  sg->add_option("--in", sg_in, "input volume (.avl)")->required();
  sg->add_option("--out", sg_out, "output label map (.avl)")->required();

  auto* ev = app.add_subcommand("evaluate", "Dice report for prediction vs ground-truth dirs");
  std::string ev_pred, ev_gt, ev_report;
  ev->add_option("--pred", ev_pred, "directory of predicted label maps")->required();
  ev->add_option("--gt", ev_gt, "directory of ground-truth label maps")->required();
  ev->add_option("--report", ev_report, "JSON report path")->required();

  auto* ab = app.add_subcommand("ablation", "train and compare pipeline variants");
  std::string ab_config, ab_data, ab_variants, ab_out;
  ab->add_option("--config", ab_config, "train config file");
  ab->add_option("--data", ab_data, "cohort directory")->required();
  ab->add_option("--variants", ab_variants, "comma-separated variant ids")->required();
  ab->add_option("--out", ab_out, "output directory")->required();

  auto* sc = app.add_subcommand("scarcity", "Dice vs unlabeled-budget sweep");
  std::string sc_config, sc_data, sc_variants = "vanilla,adv", sc_counts, sc_out;
  sc->add_option("--config", sc_config, "train config file");
  sc->add_option("--data", sc_data, "cohort directory")->required();
  sc->add_option("--variants", sc_variants, "comma-separated variant ids");
  sc->add_option("--counts", sc_counts, "comma-separated unlabeled budgets")->required();
  sc->add_option("--out", sc_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_phantoms(gen_out, gen_size, gen_rank, gen_classes, gen_unlabeled,
                              gen_heldout, gen_seed, gen_amp, gen_lesion);
    if (tr->parsed()) return cmd_train(tr_config, tr_data, tr_out);
    if (sg->parsed()) return cmd_segment(sg_ck, sg_in, sg_out);
    if (ev->parsed()) return cmd_evaluate(ev_pred, ev_gt, ev_report);
    if (ab->parsed()) return cmd_ablation(ab_config, ab_data, ab_variants, ab_out);
    if (sc->parsed()) return cmd_scarcity(sc_config, sc_data, sc_variants, sc_counts, sc_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
