#include "covlm/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "covlm/checkpoint.hpp"

namespace covlm {

FreezeMask freeze_schedule(int stage) {
  FreezeMask m;
  for (const auto& p : kPartitions) m[p] = false;
  switch (stage) {
    case 1:
      m["downsample_projector"] = true;
      break;
    case 2:
      for (const auto& p : kPartitions) m[p] = true;
      m["region_encoder"] = false;
      break;
    case 3:
      m["downsample_projector"] = true;
      m["region_projector"] = true;
      m["word_embeddings"] = true;
      m["decoder"] = true;
      m["lm_head"] = true;
      break;
    default:
      throw std::invalid_argument("freeze_schedule: stage must be 1..3");
  }
  return m;
}

void apply_freeze_mask(const ParamRefs<float>& params, const FreezeMask& mask) {
  for (auto* p : params) {
    const std::string part = Model<float>::partition_of(p->name);
    auto it = mask.find(part);
    if (it == mask.end())
      throw std::invalid_argument("apply_freeze_mask: unknown partition " + part);
    p->trainable = it->second;
  }
}

Model<float>::StepInput record_to_input(const InstructionRecord& rec,
                                        const Vocab& vocab,
                                        const ModelConfig& cfg) {
  Model<float>::StepInput in;
  const Image img = render_scene(rec.scene);
  in.image = to_float_tensor<float>(img);
  in.ins_ids = tokenize(rec.instruction, vocab).ids;
  in.answer_ids = tokenize(rec.answer, vocab).ids;
  if (rec.region_ref)
    in.region_image =
        crop_region(in.image, *rec.region_ref, cfg.region_size);
  return in;
}

StageResult train_stage(Model<float>& model, AdamState<float>& opt_state,
                        const std::vector<InstructionRecord>& data,
                        const Vocab& vocab, const StageConfig& cfg,
                        const std::string& trace_csv_path) {
  if (data.empty()) throw std::invalid_argument("train_stage: empty dataset");
  for (const auto& rec : data)
    if (rec.stage != cfg.stage)
      throw std::invalid_argument("train_stage: dataset stage tag mismatch");

  auto params = model.params();
  const FreezeMask mask = freeze_schedule(cfg.stage);
  apply_freeze_mask(params, mask);

  const int warmup_steps =
      (cfg.stage == 2 && cfg.desk_warmup) ? cfg.steps / 5 : 0;
  if (warmup_steps > 0)
    for (auto* p : params)
      if (Model<float>::partition_of(p->name) == "region_encoder")
        p->trainable = true;

  StageResult result;
  result.checksums_before = all_partition_checksums(params);

  AdamConfig adam;
  adam.lr = cfg.lr;

  std::ofstream trace;
  if (!trace_csv_path.empty()) {
    trace.open(trace_csv_path);
    trace << "step,loss,lr\n";
  }

  size_t cursor = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    if (warmup_steps > 0 && step == warmup_steps) {
      // End of desk-scale warm-up: region encoder freezes for the rest of
      // stage II, matching the stage contract.
      for (auto* p : params)
        if (Model<float>::partition_of(p->name) == "region_encoder")
          p->trainable = false;
    }
    if (cfg.final_lr_frac != 1.0) {
      const double t = cfg.steps > 1 ? double(step) / (cfg.steps - 1) : 0.0;
      const double shape = 0.5 * (1.0 + std::cos(t * 3.14159265358979323846));
      adam.lr = cfg.lr * (cfg.final_lr_frac + (1.0 - cfg.final_lr_frac) * shape);
    }
    model.zero_grads();
    double batch_loss = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& rec = data[cursor % data.size()];
      ++cursor;
      batch_loss += model.train_step(record_to_input(rec, vocab, model.cfg));
    }
    batch_loss /= cfg.batch_size;
    if (!std::isfinite(batch_loss))
      throw std::runtime_error("train_stage: non-finite loss at step " +
                               std::to_string(step));
    // Average accumulated gradients over the batch.
    for (auto* p : params)
      for (auto& g : p->grad.data) g /= static_cast<float>(cfg.batch_size);
    model.zero_frozen_grads();
    adam_step(params, opt_state, adam);
    result.loss_trace.push_back(batch_loss);
    if (trace.is_open())
      trace << step << "," << batch_loss << "," << adam.lr << "\n";
  }

  result.checksums_after = all_partition_checksums(params);
  return result;
}

void run_pipeline(Model<float>& model,
                  const std::vector<std::vector<InstructionRecord>>& stage_data,
                  const Vocab& vocab, const PipelineConfig& cfg) {
  if (cfg.stages.size() != stage_data.size())
    throw std::invalid_argument("run_pipeline: stage config/data count mismatch");
  int expected = 1;
  for (const auto& sc : cfg.stages) {
    if (sc.stage != expected)
      throw std::invalid_argument("run_pipeline: stages must run in order 1..N");
    ++expected;
  }
  if (!cfg.run_dir.empty())
    std::filesystem::create_directories(cfg.run_dir);
  for (size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& sc = cfg.stages[i];
    // Fresh optimizer moments per stage; the weights carry over.
    AdamState<float> opt;
    const std::string prefix =
        cfg.run_dir.empty() ? "" : cfg.run_dir + "/stage" + std::to_string(sc.stage);
    train_stage(model, opt, stage_data[i], vocab, sc,
                prefix.empty() ? "" : prefix + "_trace.csv");
    if (!prefix.empty()) save_checkpoint(prefix + ".ckpt", model.params());
  }
}

}  // namespace covlm
