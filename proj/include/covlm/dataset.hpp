#pragma once

#include <string>
#include <vector>

#include "covlm/instructions.hpp"

namespace covlm {

struct StageDatasetConfig {
  int stage = 1;
  int size = 1000;
  uint64_t seed = 1;
  SceneConfig scene;
  /// When > 0, scenes for the box-precision referring tasks (detection, rec,
  /// reg, grounding) cap their object count here instead of at
  /// scene.max_objects. Counting, non-existence judging and captions keep the
  /// full scene complexity. 0 = one complexity for every task.
  int localized_max_objects = 0;
};

/// JSONL record: {id, stage, task, image: {base64_png}, instruction, answer,
/// region_ref: [x1,y1,x2,y2] px | null, gt: {categories, boxes px}}.
std::string record_to_json(const InstructionRecord& rec, const Image& img);
InstructionRecord record_from_json(const std::string& line, Image* img_out);

/// Builds a stage dataset: stage 1 is caption-only, stage 2 covers all
/// localization tasks, stage 3 re-samples the stage-2 task mix with diverse
/// instruction phrasings. Deterministic given (seed, config); shuffled.
std::vector<InstructionRecord> build_stage_dataset(const StageDatasetConfig& cfg);

void write_dataset_jsonl(const std::string& path,
                         const std::vector<InstructionRecord>& records);
std::vector<InstructionRecord> read_dataset_jsonl(const std::string& path);

/// Instruction and answer strings of every record, for vocabulary building.
std::vector<std::string> corpus_texts(const std::vector<InstructionRecord>& records);

/// All template phrasings and fixed answer fragments, so the vocabulary covers
/// every task even when a small sample misses one.
std::vector<std::string> template_corpus();

}  // namespace covlm
