#include "covlm/instructions.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace covlm {

const char* task_name(Task t) {
  switch (t) {
    case Task::Caption: return "caption";
    case Task::Detection: return "detection";
    case Task::Rec: return "rec";
    case Task::Reg: return "reg";
    case Task::Grounding: return "grounding";
    case Task::Counting: return "counting";
    case Task::NonexistJudge: return "nonexist-judge";
  }
  return "?";
}

std::optional<Task> task_from_name(const std::string& name) {
  for (Task t : {Task::Caption, Task::Detection, Task::Rec, Task::Reg,
                 Task::Grounding, Task::Counting, Task::NonexistJudge})
    if (name == task_name(t)) return t;
  return std::nullopt;
}

namespace {

const std::vector<std::vector<std::string>>& templates(Task t) {
  static const std::map<Task, std::vector<std::vector<std::string>>> table = {
      {Task::Caption,
       {{"describe the image"},
        {"what is in the picture"},
        {"give a short caption of the image"}}},
      {Task::Detection,
       {{"locate all objects in the image"},
        {"detect every object and give its box"},
        {"find all objects with their boxes"}}},
      {Task::Rec,
       {{"locate the {category}"},
        {"where is the {category}"},
        {"find the {category} in the image"}}},
      {Task::Reg,
       {{"describe the object at {coords}"},
        {"what is the object at {coords}"},
        {"name the object located at {coords}"}}},
      {Task::Grounding,
       {{"locate every {category}"},
        {"find all {category}"},
        {"give boxes for each {category}"}}},
      {Task::Counting,
       {{"count the objects like <region>"},
        {"how many objects match <region>"},
        {"count all objects similar to <region>"}}},
      {Task::NonexistJudge,
       {{"is there any {category} in the image"},
        {"does the image contain a {category}"},
        {"judge if a {category} exists in the image"}}},
  };
  return table.at(t);
}

std::string fill(std::string tpl, const std::string& slot,
                 const std::string& value) {
  const auto pos = tpl.find(slot);
  if (pos != std::string::npos) tpl.replace(pos, slot.size(), value);
  return tpl;
}

const char* kNumberWords[] = {"zero", "one", "two",   "three", "four",
                              "five", "six", "seven", "eight", "nine"};

std::string count_phrase(int n, const std::string& category) {
  std::string word = n <= 9 ? kNumberWords[n] : std::to_string(n);
  std::string out = word + " " + category;
  if (n != 1) out += "s";
  return out;
}

BoxNorm norm_of(const SceneObject& o, int canvas) {
  return normalize(o.box, canvas, canvas);
}

}  // namespace

int template_count(Task t) { return static_cast<int>(templates(t).size()); }

std::optional<InstructionRecord> to_instruction(const SceneRecord& scene,
                                                Task task, std::mt19937_64& rng,
                                                int variant) {
  if (variant < 0 || variant >= template_count(task))
    throw std::invalid_argument("to_instruction: bad template variant");
  const std::string tpl = templates(task)[variant][0];

  InstructionRecord rec;
  rec.task = task;
  rec.scene = scene;
  rec.instruction = tpl;

  const auto objs = reading_order(scene.objects);

  // Per-category instance lists in reading order.
  std::map<int, std::vector<SceneObject>> by_cat;
  for (const auto& o : objs) by_cat[o.category].push_back(o);

  switch (task) {
    case Task::Caption: {
      if (objs.empty()) return std::nullopt;
      std::string ans = "an image with ";
      bool first = true;
      for (const auto& [cat, list] : by_cat) {
        if (!first) ans += " and ";
        ans += count_phrase(static_cast<int>(list.size()), category_name(cat));
        first = false;
      }
      rec.answer = ans;
      break;
    }
    case Task::Detection: {
      if (objs.empty()) return std::nullopt;
      std::string ans;
      for (const auto& o : objs) {
        if (!ans.empty()) ans += " ";
        const BoxNorm b = norm_of(o, scene.canvas);
        ans += o.category_name() + "-" + encode_box(b);
        rec.gt_boxes.push_back(b);
        rec.gt_categories.push_back(o.category);
      }
      rec.answer = ans;
      break;
    }
    case Task::Rec: {
      // Needs a uniquely describable object: a category with one instance.
      std::vector<int> unique_cats;
      for (const auto& [cat, list] : by_cat)
        if (list.size() == 1) unique_cats.push_back(cat);
      if (unique_cats.empty()) return std::nullopt;
      const int cat = unique_cats[std::uniform_int_distribution<size_t>(
          0, unique_cats.size() - 1)(rng)];
      const SceneObject& o = by_cat[cat][0];
      const BoxNorm b = norm_of(o, scene.canvas);
      rec.instruction = fill(tpl, "{category}", category_name(cat));
      rec.answer = encode_box(b);
      rec.gt_boxes.push_back(b);
      rec.gt_categories.push_back(cat);
      break;
    }
    case Task::Reg: {
      if (objs.empty()) return std::nullopt;
      const SceneObject& o = objs[std::uniform_int_distribution<size_t>(
          0, objs.size() - 1)(rng)];
      const BoxNorm b = norm_of(o, scene.canvas);
      rec.instruction = fill(tpl, "{coords}", refer_by_coords(b));
      rec.answer = o.category_name();
      rec.gt_boxes.push_back(b);
      rec.gt_categories.push_back(o.category);
      break;
    }
    case Task::Grounding: {
      if (objs.empty()) return std::nullopt;
      std::vector<int> cats;
      for (const auto& [cat, list] : by_cat) cats.push_back(cat);
      const int cat =
          cats[std::uniform_int_distribution<size_t>(0, cats.size() - 1)(rng)];
      rec.instruction = fill(tpl, "{category}", category_name(cat));
      std::string ans;
      for (const auto& o : by_cat[cat]) {
        if (!ans.empty()) ans += " ";
        const BoxNorm b = norm_of(o, scene.canvas);
        ans += o.category_name() + "-" + encode_box(b);
        rec.gt_boxes.push_back(b);
        rec.gt_categories.push_back(cat);
      }
      rec.answer = ans;
      break;
    }
    case Task::Counting: {
      if (objs.empty()) return std::nullopt;
      const SceneObject& exemplar = objs[std::uniform_int_distribution<size_t>(
          0, objs.size() - 1)(rng)];
      rec.region_ref = exemplar.box;
      const auto& matches = by_cat[exemplar.category];
      std::string ans = std::to_string(matches.size());
      for (const auto& o : matches) {
        const BoxNorm b = norm_of(o, scene.canvas);
        ans += " " + encode_box(b);
        rec.gt_boxes.push_back(b);
        rec.gt_categories.push_back(o.category);
      }
      rec.answer = ans;
      break;
    }
    case Task::NonexistJudge: {
      std::vector<int> absent;
      for (int c = 0; c < category_count(); ++c)
        if (!by_cat.count(c)) absent.push_back(c);
      if (absent.empty()) return std::nullopt;
      const int cat = absent[std::uniform_int_distribution<size_t>(
          0, absent.size() - 1)(rng)];
      rec.instruction = fill(tpl, "{category}", category_name(cat));
      rec.answer = kNoneAnswer;
      rec.gt_categories.push_back(cat);
      break;
    }
  }
  return rec;
}

}  // namespace covlm
