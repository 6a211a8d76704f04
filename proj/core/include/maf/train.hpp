#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "maf/config.hpp"
#include "maf/dataset.hpp"
#include "maf/model.hpp"

namespace maf {

// named scalar losses of one iteration; l_t and l_maf are read off the tape,
// so the composition identities hold to rounding
struct LossBreakdown {
  double l_det = 0.0;
  double l_3 = 0.0, l_4 = 0.0, l_5 = 0.0;
  double l_p = 0.0;
  double l_t = 0.0;
  double l_maf = 0.0;
};

struct SgdState {
  std::map<std::string, Tensor> velocity;

  static SgdState for_model(MafModel& model);
};

// v <- momentum * v - lr * g;  w <- w + v
void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
                       double momentum);

// SourceOnly skips the target forward and all alignment branches; Auto picks
// it when alpha == 0. FullGraph always builds the complete minimax graph
// (used to verify that the alpha = 0 / lambda = 0 reductions are exact).
enum class StepMode { Auto, FullGraph, SourceOnly };

// one source + one target image, a single tape over both, one SGD update
LossBreakdown train_step(MafModel& model, SgdState& sgd, const DomainSample& src,
                         const DomainSample& tgt, const RunConfig& cfg, double lr,
                         StepMode mode = StepMode::Auto);

// deterministic per-epoch shuffling; sampling state is (seed, iteration) only
int sample_index(uint64_t seed, uint64_t stream, int iter, int n);

struct TrainOutput {
  MafModel model;
  SgdState sgd;
  std::vector<LossBreakdown> log;
  std::filesystem::path checkpoint_path;
  std::filesystem::path losses_path;
  double wall_seconds = 0.0;
};

// full schedule from a fresh model; writes losses.csv and checkpoint.maf
// under out_dir
TrainOutput train(const RunConfig& cfg, const Dataset& trainset,
                  const std::filesystem::path& out_dir);

// checkpoint glue (parameters plus optimizer velocity records)
void save_model_checkpoint(const std::filesystem::path& path, MafModel& model, SgdState* sgd);
void load_model_checkpoint(const std::filesystem::path& path, MafModel& model, SgdState* sgd);

void write_losses_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& log,
                      const RunConfig& cfg);

// inference products shared by training-time proposal generation and eval
struct ImageForward {
  BackboneFeatures feats;
  Tensor rpn_obj, rpn_reg;
  std::vector<BBox> anchors;
  std::vector<BBox> proposals;
  std::vector<double> proposal_scores;
  std::vector<ProposalRecord> records;  // one per proposal
};

ImageForward forward_image(Tape& t, MafModel& model, const Tensor& image);

}  // namespace maf
