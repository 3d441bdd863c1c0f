#pragma once

#include <string>
#include <variant>

#include "osseg/trainer.hpp"
#include "osseg/volume.hpp"

namespace osseg {

// Binary volume container: magic "AVL1", dtype byte (0 = float32 volume,
// 1 = uint16 label map), rank byte, rank x uint32 little-endian dims, then the
// row-major payload (last axis fastest, little-endian). Every malformed byte
// sequence yields a FormatError carrying the offending byte offset.
void write_volume(const std::string& path, const Volume& v);
void write_labels(const std::string& path, const LabelMap& y);

using LoadedVolume = std::variant<Volume, LabelMap>;
LoadedVolume read_volume_file(const std::string& path);

Volume read_volume(const std::string& path);      // FormatError if the file holds labels
LabelMap read_labels(const std::string& path);    // FormatError if the file holds scalars

// Flat "key = value" config text mirroring TrainConfig field names; '#' starts
// a comment. Unknown keys are an error.
TrainConfig parse_train_config(const std::string& text);
std::string train_config_text(const TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

// Checkpoint container for the three networks plus training position. Raw
// float bytes round-trip bit-exactly.
struct Checkpoint {
  int spatial_rank = 0;
  int num_classes = 0;
  int levels = 0;
  int base_channels = 0;
  int iteration = 0;
  std::vector<std::pair<std::string, Tensor>> reg, adv, seg;  // name -> values
};

Checkpoint checkpoint_of(const TrainState& state);
void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

// Restores parameters into freshly built networks; shapes must match.
void load_params(ParamStore& params, const std::vector<std::pair<std::string, Tensor>>& values);
SegmentationNet segmenter_from_checkpoint(const Checkpoint& ck);
void restore_train_state(TrainState& state, const Checkpoint& ck);

}  // namespace osseg
