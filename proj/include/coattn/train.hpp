#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coattn/data.hpp"
#include "coattn/model.hpp"

namespace coattn {

struct TrainConfig {
  int epochs = 10;
  double lr = 0.01;
  int batch = 50;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool freeze_attention = false;  // leave attention vectors at their init
  // called after each completed epoch (e.g. to re-run equivariance checks)
  std::function<void(int, const Model&)> post_epoch;
};

struct EpochStat {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_error = 0.0;
};

// Minibatch SGD with momentum; deterministic in cfg.seed (shuffling is the
// only randomness). Aborts with a diagnostic naming the epoch if the loss
// stops being finite.
std::vector<EpochStat> train_loop(Model& m, const DatasetBundle& train,
                                  const DatasetBundle& valid, const TrainConfig& cfg);

// Error rate in [0,1]; argmax ties go to the lowest class index.
double evaluate(const Model& m, const DatasetBundle& d, std::vector<int>* preds = nullptr);

std::string history_csv(const std::vector<EpochStat>& stats);

}  // namespace coattn
