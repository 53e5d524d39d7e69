#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "covlm/scene.hpp"

namespace covlm {

enum class Task {
  Caption,
  Detection,
  Rec,
  Reg,
  Grounding,
  Counting,
  NonexistJudge,
};

const char* task_name(Task t);
std::optional<Task> task_from_name(const std::string& name);

struct InstructionRecord {
  std::string id;
  int stage = 0;
  Task task = Task::Caption;
  SceneRecord scene;
  std::string instruction;
  std::string answer;
  std::optional<BoxPix> region_ref;  // exemplar crop box for counting
  // Eval metadata: GT boxes relevant to the instruction (normalized).
  std::vector<BoxNorm> gt_boxes;
  std::vector<int> gt_categories;
};

/// Number of distinct instruction phrasings for a task.
int template_count(Task t);

/// Fills a task template from the scene. `variant` picks the phrasing
/// (stage 3 uses multiple); returns nullopt when the task is inapplicable,
/// e.g. REC with no uniquely describable object.
std::optional<InstructionRecord> to_instruction(const SceneRecord& scene,
                                                Task task, std::mt19937_64& rng,
                                                int variant = 0);

/// Answer sentinel for non-existing judging.
inline constexpr const char* kNoneAnswer = "None";

}  // namespace covlm
