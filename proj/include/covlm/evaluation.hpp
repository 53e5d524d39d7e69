#pragma once

#include <map>
#include <string>
#include <vector>

#include "covlm/dataset.hpp"
#include "covlm/model.hpp"
#include "covlm/textcodec.hpp"

namespace covlm {

struct DetPrediction {
  int category = -1;
  BoxNorm box;
  double confidence = 1.0;
};

struct GtObject {
  int category = -1;
  BoxNorm box;
};

/// Per-sample highest-confidence box vs the single GT; correct iff
/// IoU >= 0.5. Samples with zero predictions count as incorrect.
double rec_accuracy(const std::vector<std::vector<DetPrediction>>& preds,
                    const std::vector<BoxNorm>& gts);

struct CocoMetrics {
  double mAP = 0, ap50 = 0, ap75 = 0, ar100 = 0;
};

/// COCO-style AP: greedy confidence-ranked matching per category and IoU
/// threshold in {0.50,...,0.95}, 101-point interpolated AP, AR at <=100
/// detections. Categories with no ground truth are skipped.
CocoMetrics coco_map(const std::vector<std::vector<DetPrediction>>& preds,
                     const std::vector<std::vector<GtObject>>& gts);

/// Phrase correct iff any predicted box hits any GT box at IoU >= 0.5.
double grounding_any(const std::vector<std::vector<BoxNorm>>& preds,
                     const std::vector<std::vector<BoxNorm>>& gts);

/// Phrase correct iff the merged predicted box hits the merged GT box.
double grounding_merged(const std::vector<std::vector<BoxNorm>>& preds,
                        const std::vector<std::vector<BoxNorm>>& gts);

struct CountingMetrics {
  double mae = 0, nae = 0;
  int nae_excluded = 0;  // gt == 0 samples excluded from NAE
};

CountingMetrics counting_metrics(const std::vector<int>& pred_counts,
                                 const std::vector<int>& gt_counts);

/// One generated object: optional category words followed by a coordinate
/// box, with the geometric-mean confidence over its token span.
struct ParsedObject {
  std::string category_text;
  int category = -1;  // taxonomy id, -1 when the text matches no category
  BoxNorm box;
  double confidence = 1.0;
};

/// Token-level parse of a generated answer into (category, box, confidence)
/// objects. Tolerant: malformed fragments are skipped.
std::vector<ParsedObject> parse_predictions(const std::vector<int>& ids,
                                            const std::vector<double>& probs,
                                            const Vocab& v);

struct EvalReport {
  std::string task;
  std::map<std::string, double> metrics;
  int samples = 0;
  std::string to_json() const;
};

/// Runs greedy generation per record, parses answers, and dispatches to the
/// task metric. Optionally dumps per-record predictions as JSONL.
EvalReport evaluate_model(Model<float>& model,
                          const std::vector<InstructionRecord>& data,
                          const Vocab& vocab, Task task,
                          const std::string& dump_jsonl_path = "");

}  // namespace covlm
