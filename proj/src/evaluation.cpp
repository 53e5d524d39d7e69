#include "covlm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "covlm/training.hpp"
#include "json.hpp"

namespace covlm {

double rec_accuracy(const std::vector<std::vector<DetPrediction>>& preds,
                    const std::vector<BoxNorm>& gts) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("rec_accuracy: length mismatch");
  if (preds.empty()) throw std::invalid_argument("rec_accuracy: empty input");
  int correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].empty()) continue;  // zero predictions count as incorrect
    const DetPrediction* best = &preds[i][0];
    for (const auto& p : preds[i])
      if (p.confidence > best->confidence) best = &p;
    if (iou(best->box, gts[i]) >= 0.5) ++correct;
  }
  return static_cast<double>(correct) / preds.size();
}

namespace {

struct RankedPred {
  int image = 0;
  BoxNorm box;
  double confidence = 0;
};

// AP at one (category, threshold): greedy match in confidence order, then
// 101-point interpolated precision over recall.
double ap_single(const std::vector<RankedPred>& ranked,
                 const std::vector<std::vector<BoxNorm>>& gts_per_image,
                 double thr, int total_gt, double* recall_out) {
  std::vector<std::vector<bool>> used(gts_per_image.size());
  for (size_t i = 0; i < gts_per_image.size(); ++i)
    used[i].assign(gts_per_image[i].size(), false);
  std::vector<int> tp(ranked.size(), 0);
  for (size_t r = 0; r < ranked.size(); ++r) {
    const auto& p = ranked[r];
    int best = -1;
    double best_iou = thr;
    const auto& gts = gts_per_image[p.image];
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[p.image][g]) continue;
      const double v = iou(p.box, gts[g]);
      if (v >= best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[p.image][best] = true;
      tp[r] = 1;
    }
  }
  // precision/recall points
  std::vector<double> prec(ranked.size()), rec(ranked.size());
  int cum_tp = 0;
  for (size_t r = 0; r < ranked.size(); ++r) {
    cum_tp += tp[r];
    prec[r] = static_cast<double>(cum_tp) / (r + 1);
    rec[r] = static_cast<double>(cum_tp) / total_gt;
  }
  if (recall_out)
    *recall_out = ranked.empty() ? 0.0 : static_cast<double>(cum_tp) / total_gt;
  // 101-point interpolation
  double ap = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r_level = i / 100.0;
    double best_p = 0;
    for (size_t r = 0; r < ranked.size(); ++r)
      if (rec[r] >= r_level) best_p = std::max(best_p, prec[r]);
    ap += best_p;
  }
  return ap / 101.0;
}

}  // namespace

CocoMetrics coco_map(const std::vector<std::vector<DetPrediction>>& preds,
                     const std::vector<std::vector<GtObject>>& gts) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("coco_map: image count mismatch");
  std::vector<double> thresholds;
  for (int i = 0; i < 10; ++i) thresholds.push_back(0.5 + 0.05 * i);

  std::vector<int> categories;
  for (const auto& img : gts)
    for (const auto& g : img)
      if (std::find(categories.begin(), categories.end(), g.category) ==
          categories.end())
        categories.push_back(g.category);
  std::sort(categories.begin(), categories.end());

  CocoMetrics out;
  if (categories.empty()) return out;

  double sum_ap = 0, sum_ap50 = 0, sum_ap75 = 0, sum_ar = 0;
  int cells = 0;
  for (int cat : categories) {
    std::vector<std::vector<BoxNorm>> cat_gts(gts.size());
    int total_gt = 0;
    for (size_t i = 0; i < gts.size(); ++i)
      for (const auto& g : gts[i])
        if (g.category == cat) {
          cat_gts[i].push_back(g.box);
          ++total_gt;
        }
    // Confidence-ranked predictions; ties break by insertion order
    // (stable sort over image then in-image order).
    std::vector<RankedPred> ranked;
    for (size_t i = 0; i < preds.size(); ++i) {
      int kept = 0;
      for (const auto& p : preds[i]) {
        if (p.category != cat) continue;
        if (++kept > 100) break;  // AR@100 detection cap
        ranked.push_back({static_cast<int>(i), p.box, p.confidence});
      }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedPred& a, const RankedPred& b) {
                       return a.confidence > b.confidence;
                     });
    for (double thr : thresholds) {
      double recall = 0;
      const double ap = ap_single(ranked, cat_gts, thr, total_gt, &recall);
      sum_ap += ap;
      sum_ar += recall;
      if (thr == 0.5) sum_ap50 += ap;
      if (std::abs(thr - 0.75) < 1e-9) sum_ap75 += ap;
      ++cells;
    }
  }
  out.mAP = sum_ap / cells;
  out.ap50 = sum_ap50 / categories.size();
  out.ap75 = sum_ap75 / categories.size();
  out.ar100 = sum_ar / cells;
  return out;
}

double grounding_any(const std::vector<std::vector<BoxNorm>>& preds,
                     const std::vector<std::vector<BoxNorm>>& gts) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("grounding_any: length mismatch");
  if (preds.empty()) throw std::invalid_argument("grounding_any: empty input");
  int correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (gts[i].empty())
      throw std::invalid_argument("grounding_any: phrase without GT boxes");
    bool hit = false;
    for (const auto& p : preds[i])
      for (const auto& g : gts[i])
        if (iou(p, g) >= 0.5) hit = true;
    if (hit) ++correct;
  }
  return static_cast<double>(correct) / preds.size();
}

double grounding_merged(const std::vector<std::vector<BoxNorm>>& preds,
                        const std::vector<std::vector<BoxNorm>>& gts) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("grounding_merged: length mismatch");
  if (preds.empty())
    throw std::invalid_argument("grounding_merged: empty input");
  int correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (gts[i].empty())
      throw std::invalid_argument("grounding_merged: phrase without GT boxes");
    if (preds[i].empty()) continue;
    if (iou(merge_boxes(preds[i]), merge_boxes(gts[i])) >= 0.5) ++correct;
  }
  return static_cast<double>(correct) / preds.size();
}

CountingMetrics counting_metrics(const std::vector<int>& pred_counts,
                                 const std::vector<int>& gt_counts) {
  if (pred_counts.size() != gt_counts.size())
    throw std::invalid_argument("counting_metrics: length mismatch");
  if (pred_counts.empty())
    throw std::invalid_argument("counting_metrics: empty input");
  CountingMetrics out;
  double nae_sum = 0;
  int nae_n = 0;
  for (size_t i = 0; i < pred_counts.size(); ++i) {
    const double err = std::abs(pred_counts[i] - gt_counts[i]);
    out.mae += err;
    if (gt_counts[i] >= 1) {
      nae_sum += err / gt_counts[i];
      ++nae_n;
    } else {
      ++out.nae_excluded;
    }
  }
  out.mae /= pred_counts.size();
  out.nae = nae_n > 0 ? nae_sum / nae_n : 0.0;
  return out;
}

std::vector<ParsedObject> parse_predictions(const std::vector<int>& ids,
                                            const std::vector<double>& probs,
                                            const Vocab& v) {
  if (probs.size() != ids.size())
    throw std::invalid_argument("parse_predictions: ids/probs mismatch");
  std::vector<ParsedObject> out;
  const int open = v.id_of("[");
  const int close = v.id_of("]");
  size_t object_start = 0;  // first token after the previous object
  size_t i = 0;
  while (i < ids.size()) {
    if (ids[i] != open) {
      ++i;
      continue;
    }
    // find the matching close bracket
    size_t j = i + 1;
    while (j < ids.size() && ids[j] != close && ids[j] != open) ++j;
    if (j >= ids.size() || ids[j] != close) {
      i = j;
      continue;
    }
    std::string box_text;
    for (size_t t = i; t <= j; ++t) box_text += v.token(ids[t]);
    const auto decoded = decode_boxes(box_text);
    if (decoded.boxes.size() == 1) {
      ParsedObject obj;
      obj.box = decoded.boxes[0];
      // category words between the previous object and this box ('-' glue
      // and stray digits skipped)
      std::string cat;
      for (size_t t = object_start; t < i; ++t) {
        const std::string& tok = v.token(ids[t]);
        if (tok.size() == 1 &&
            (std::isdigit(static_cast<unsigned char>(tok[0])) || tok == "-" ||
             tok == "." || tok == ","))
          continue;
        if (!cat.empty()) cat += ' ';
        cat += tok;
      }
      obj.category_text = cat;
      obj.category = category_id(cat);
      std::vector<double> span(probs.begin() + object_start,
                               probs.begin() + j + 1);
      obj.confidence = token_confidence(span);
      out.push_back(std::move(obj));
    }
    i = j + 1;
    object_start = i;
  }
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["samples"] = samples;
  j["metrics"] = metrics;
  return j.dump(2);
}

EvalReport evaluate_model(Model<float>& model,
                          const std::vector<InstructionRecord>& data,
                          const Vocab& vocab, Task task,
                          const std::string& dump_jsonl_path) {
  EvalReport report;
  report.task = task_name(task);
  report.samples = static_cast<int>(data.size());

  std::ofstream dump;
  if (!dump_jsonl_path.empty()) dump.open(dump_jsonl_path);

  std::vector<std::vector<DetPrediction>> det_preds;
  std::vector<std::vector<GtObject>> det_gts;
  std::vector<std::vector<BoxNorm>> box_preds, box_gts;
  std::vector<BoxNorm> rec_gts;
  std::vector<int> pred_counts, gt_counts;
  int exact = 0;
  int count_conflicts = 0;

  for (const auto& rec : data) {
    if (rec.task != task)
      throw std::invalid_argument("evaluate_model: record task mismatch");
    const auto in = record_to_input(rec, vocab, model.cfg);
    Tensor<float> vtok = model.visual_tokens(in.image);
    Tensor<float> rtok;
    if (in.region_image) rtok = model.encode_region(*in.region_image);
    const auto prefix = model.assemble_prompt(
        vtok, in.ins_ids, in.region_image ? &rtok : nullptr, nullptr);
    const int max_new = model.cfg.context_limit - prefix.embeddings.shape[0];
    const GenerationOutput gen = model.generate(prefix, max_new);
    const std::string raw = detokenize(gen.ids, vocab);
    const auto objects = parse_predictions(gen.ids, gen.probs, vocab);

    switch (task) {
      case Task::Rec: {
        std::vector<DetPrediction> ps;
        for (const auto& o : objects)
          ps.push_back({o.category, o.box, o.confidence});
        det_preds.push_back(ps);
        rec_gts.push_back(rec.gt_boxes.at(0));
        break;
      }
      case Task::Detection: {
        std::vector<DetPrediction> ps;
        for (const auto& o : objects)
          if (o.category >= 0) ps.push_back({o.category, o.box, o.confidence});
        det_preds.push_back(ps);
        std::vector<GtObject> gs;
        for (size_t i = 0; i < rec.gt_boxes.size(); ++i)
          gs.push_back({rec.gt_categories[i], rec.gt_boxes[i]});
        det_gts.push_back(gs);
        break;
      }
      case Task::Grounding: {
        std::vector<BoxNorm> ps;
        for (const auto& o : objects) ps.push_back(o.box);
        box_preds.push_back(ps);
        box_gts.push_back(rec.gt_boxes);
        break;
      }
      case Task::Counting: {
        // Predicted count = number of decoded boxes; a conflicting leading
        // numeral is only a diagnostic.
        pred_counts.push_back(static_cast<int>(objects.size()));
        gt_counts.push_back(static_cast<int>(rec.gt_boxes.size()));
        int numeral = -1;
        if (!gen.ids.empty()) {
          std::string lead;
          for (int id : gen.ids) {
            const std::string& t = vocab.token(id);
            if (t.size() == 1 && std::isdigit(static_cast<unsigned char>(t[0])))
              lead += t;
            else
              break;
          }
          if (!lead.empty()) numeral = std::stoi(lead);
        }
        if (numeral >= 0 && numeral != static_cast<int>(objects.size()))
          ++count_conflicts;
        break;
      }
      case Task::NonexistJudge:
        if (raw == kNoneAnswer) ++exact;
        break;
      case Task::Reg:
      case Task::Caption:
        if (raw == rec.answer) ++exact;
        break;
    }

    if (dump.is_open()) {
      nlohmann::json j;
      j["id"] = rec.id;
      j["raw_answer"] = raw;
      nlohmann::json boxes = nlohmann::json::array();
      nlohmann::json confs = nlohmann::json::array();
      for (const auto& o : objects) {
        boxes.push_back({o.box.x1, o.box.y1, o.box.x2, o.box.y2});
        confs.push_back(o.confidence);
      }
      j["parsed_boxes"] = boxes;
      j["confidences"] = confs;
      dump << j.dump() << "\n";
    }
  }

  switch (task) {
    case Task::Rec:
      report.metrics["acc@0.5"] = rec_accuracy(det_preds, rec_gts);
      break;
    case Task::Detection: {
      const CocoMetrics m = coco_map(det_preds, det_gts);
      report.metrics["mAP"] = m.mAP;
      report.metrics["AP50"] = m.ap50;
      report.metrics["AP75"] = m.ap75;
      report.metrics["AR100"] = m.ar100;
      break;
    }
    case Task::Grounding:
      report.metrics["any_box"] = grounding_any(box_preds, box_gts);
      report.metrics["merged_boxes"] = grounding_merged(box_preds, box_gts);
      break;
    case Task::Counting: {
      const CountingMetrics m = counting_metrics(pred_counts, gt_counts);
      report.metrics["MAE"] = m.mae;
      report.metrics["NAE"] = m.nae;
      report.metrics["count_box_conflicts"] = count_conflicts;
      break;
    }
    case Task::NonexistJudge:
      report.metrics["accuracy"] = static_cast<double>(exact) / data.size();
      break;
    case Task::Reg:
    case Task::Caption:
      report.metrics["exact_match"] = static_cast<double>(exact) / data.size();
      break;
  }
  return report;
}

}  // namespace covlm
