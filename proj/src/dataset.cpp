#include "covlm/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace covlm {

namespace {

using nlohmann::json;

json box_to_json(const BoxPix& b) {
  return json::array({b.x1, b.y1, b.x2, b.y2});
}

BoxPix box_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

}  // namespace

std::string record_to_json(const InstructionRecord& rec, const Image& img) {
  json j;
  j["id"] = rec.id;
  j["stage"] = rec.stage;
  j["task"] = task_name(rec.task);
  j["image"] = {{"base64_png", base64_encode(encode_png(img))}};
  j["instruction"] = rec.instruction;
  j["answer"] = rec.answer;
  j["region_ref"] = rec.region_ref ? box_to_json(*rec.region_ref) : json(nullptr);
  json gt_boxes = json::array();
  for (const auto& b : rec.gt_boxes)
    gt_boxes.push_back(box_to_json(denormalize(b, rec.scene.canvas, rec.scene.canvas)));
  j["gt"] = {{"categories", rec.gt_categories}, {"boxes", gt_boxes}};
  json objs = json::array();
  for (const auto& o : rec.scene.objects)
    objs.push_back({{"category", o.category}, {"box", box_to_json(o.box)}});
  j["scene"] = {{"canvas", rec.scene.canvas},
                {"seed", rec.scene.seed},
                {"objects", objs}};
  return j.dump();
}

InstructionRecord record_from_json(const std::string& line, Image* img_out) {
  const json j = json::parse(line);
  InstructionRecord rec;
  rec.id = j.at("id").get<std::string>();
  rec.stage = j.at("stage").get<int>();
  const auto t = task_from_name(j.at("task").get<std::string>());
  if (!t) throw std::runtime_error("record_from_json: unknown task");
  rec.task = *t;
  rec.instruction = j.at("instruction").get<std::string>();
  rec.answer = j.at("answer").get<std::string>();
  if (!j.at("region_ref").is_null())
    rec.region_ref = box_from_json(j.at("region_ref"));
  rec.scene.canvas = j.at("scene").at("canvas").get<int>();
  rec.scene.seed = j.at("scene").at("seed").get<uint64_t>();
  for (const auto& o : j.at("scene").at("objects"))
    rec.scene.objects.push_back(
        {o.at("category").get<int>(), box_from_json(o.at("box"))});
  rec.gt_categories = j.at("gt").at("categories").get<std::vector<int>>();
  for (const auto& b : j.at("gt").at("boxes"))
    rec.gt_boxes.push_back(
        normalize(box_from_json(b), rec.scene.canvas, rec.scene.canvas));
  if (img_out) {
    const auto png = base64_decode(
        j.at("image").at("base64_png").get<std::string>());
    *img_out = decode_png(png);
  }
  return rec;
}

namespace {

std::vector<Task> stage_task_cycle(int stage) {
  switch (stage) {
    case 1:
      return {Task::Caption};
    case 2:
    case 3:
      return {Task::Detection, Task::Grounding, Task::Rec,
              Task::Counting,  Task::Detection, Task::NonexistJudge,
              Task::Grounding, Task::Rec,       Task::Counting,
              Task::Reg,       Task::Detection, Task::NonexistJudge};
    default:
      throw std::invalid_argument("build_stage_dataset: stage must be 1..3");
  }
}

}  // namespace

std::vector<InstructionRecord> build_stage_dataset(const StageDatasetConfig& cfg) {
  if (cfg.size <= 0) throw std::invalid_argument("build_stage_dataset: empty size");
  const auto cycle = stage_task_cycle(cfg.stage);
  std::vector<InstructionRecord> out;
  out.reserve(cfg.size);
  SceneConfig localized_scene = cfg.scene;
  if (cfg.localized_max_objects > 0)
    localized_scene.max_objects = cfg.localized_max_objects;
  const auto is_localized = [](Task t) {
    return t == Task::Detection || t == Task::Rec || t == Task::Reg ||
           t == Task::Grounding;
  };
  uint64_t scene_index = 0;
  while (static_cast<int>(out.size()) < cfg.size) {
    const uint64_t seed = derive_seed(cfg.seed, scene_index);
    const Task task = cycle[out.size() % cycle.size()];
    const SceneRecord scene = gen_synthetic_scene(
        seed, cfg.localized_max_objects > 0 && is_localized(task)
                  ? localized_scene
                  : cfg.scene);
    std::mt19937_64 rng(derive_seed(cfg.seed ^ 0x5eedULL, scene_index));
    const int variant =
        cfg.stage == 3
            ? static_cast<int>(rng() % template_count(task))
            : 0;
    auto rec = to_instruction(scene, task, rng, variant);
    ++scene_index;
    if (!rec) continue;  // task inapplicable for this scene, resample
    rec->stage = cfg.stage;
    rec->id = "s" + std::to_string(cfg.stage) + "-" + std::to_string(out.size());
    out.push_back(std::move(*rec));
  }
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0xabcdef));
  std::shuffle(out.begin(), out.end(), shuffle_rng);
  return out;
}

void write_dataset_jsonl(const std::string& path,
                         const std::vector<InstructionRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  for (const auto& rec : records)
    f << record_to_json(rec, render_scene(rec.scene)) << "\n";
}

std::vector<InstructionRecord> read_dataset_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<InstructionRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(line, nullptr));
  }
  return out;
}

std::vector<std::string> corpus_texts(const std::vector<InstructionRecord>& records) {
  std::vector<std::string> out;
  out.reserve(records.size() * 2);
  for (const auto& rec : records) {
    out.push_back(rec.instruction);
    out.push_back(rec.answer);
  }
  return out;
}

std::vector<std::string> template_corpus() {
  std::vector<std::string> out;
  SceneConfig sc;
  // One scene per object count so every task, category and number word shows up.
  for (uint64_t s = 0; s < 64; ++s) {
    const SceneRecord scene = gen_synthetic_scene(derive_seed(0xc0de, s), sc);
    std::mt19937_64 rng(s);
    for (Task t : {Task::Caption, Task::Detection, Task::Rec, Task::Reg,
                   Task::Grounding, Task::Counting, Task::NonexistJudge})
      for (int v = 0; v < template_count(t); ++v)
        if (auto rec = to_instruction(scene, t, rng, v)) {
          out.push_back(rec->instruction);
          out.push_back(rec->answer);
        }
  }
  for (int c = 0; c < category_count(); ++c) {
    out.push_back(category_name(c));
    out.push_back(category_name(c) + "s");
  }
  out.push_back(kNoneAnswer);
  out.push_back(
      "an image with zero one two three four five six seven eight nine and");
  return out;
}

}  // namespace covlm
