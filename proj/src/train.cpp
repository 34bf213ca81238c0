#include "coattn/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "coattn/rng.hpp"

namespace coattn {

namespace {

// batch gather: rows of the dataset picked by index
void gather_batch(const DatasetBundle& d, const std::vector<std::int64_t>& order,
                  std::int64_t start, std::int64_t count, Tensor& images,
                  std::vector<int>& labels) {
  const std::int64_t per = d.images.size() / dataset_size(d);
  images = Tensor({count, d.images.dim(1), d.images.dim(2), d.images.dim(3)});
  labels.resize(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t src = order[static_cast<std::size_t>(start + i)];
    std::copy_n(d.images.data() + src * per, per, images.data() + i * per);
    labels[static_cast<std::size_t>(i)] = d.labels[static_cast<std::size_t>(src)];
  }
}

std::vector<Tensor*> param_ptrs(Model& m) {
  std::vector<Tensor*> out;
  for_each_param(m, [&out](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> param_names(const Model& m) {
  std::vector<std::string> out;
  for_each_param(m, [&out](const std::string& n, const Tensor&) { out.push_back(n); });
  return out;
}

}  // namespace

std::vector<EpochStat> train_loop(Model& m, const DatasetBundle& train,
                                  const DatasetBundle& valid, const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch < 1)
    throw std::runtime_error("train_loop: bad config (epochs " + std::to_string(cfg.epochs) +
                             ", batch " + std::to_string(cfg.batch) + ")");
  const std::int64_t N = dataset_size(train);
  Rng rng(cfg.seed);
  Model grads = zeros_like(m);
  Model velocity = zeros_like(m);
  auto wp = param_ptrs(m);
  auto gp = param_ptrs(grads);
  auto vp = param_ptrs(velocity);
  const auto names = param_names(m);

  std::vector<std::int64_t> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochStat> history;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    Tensor images;
    std::vector<int> labels;
    for (std::int64_t start = 0; start < N; start += cfg.batch) {
      const std::int64_t bs = std::min<std::int64_t>(cfg.batch, N - start);
      gather_batch(train, order, start, bs, images, labels);

      Trace trace;
      const Tensor logits = model_forward(m, images, &trace);
      const LossGrad lg = cross_entropy(logits, labels);
      if (!std::isfinite(lg.loss))
        throw std::runtime_error("train_loop: training diverged at epoch " +
                                 std::to_string(epoch) + " (non-finite loss)");
      loss_sum += lg.loss * static_cast<double>(bs);

      for (auto* g : gp)
        for (auto& x : g->v) x = 0.0;
      model_backward(m, trace, lg.d_logits, grads);

      for (std::size_t i = 0; i < wp.size(); ++i) {
        if (cfg.freeze_attention && names[i].find(".att") != std::string::npos) continue;
        Tensor &w = *wp[i], &g = *gp[i], &v = *vp[i];
        for (std::int64_t j = 0; j < w.size(); ++j) {
          const std::size_t k = static_cast<std::size_t>(j);
          v.v[k] = cfg.momentum * v.v[k] + g.v[k];
          w.v[k] -= cfg.lr * v.v[k];
        }
      }
    }
    EpochStat st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(N);
    st.valid_error = evaluate(m, valid);
    history.push_back(st);
    if (cfg.post_epoch) cfg.post_epoch(epoch, m);
  }
  return history;
}

double evaluate(const Model& m, const DatasetBundle& d, std::vector<int>* preds) {
  const std::int64_t N = dataset_size(d);
  if (N == 0) throw std::runtime_error("evaluate: empty dataset");
  const std::int64_t chunk = 100;
  const std::int64_t per = d.images.size() / N;
  std::int64_t wrong = 0;
  if (preds) preds->clear();
  for (std::int64_t start = 0; start < N; start += chunk) {
    const std::int64_t bs = std::min(chunk, N - start);
    Tensor images({bs, d.images.dim(1), d.images.dim(2), d.images.dim(3)});
    std::copy_n(d.images.data() + start * per, bs * per, images.data());
    const Tensor logits = model_forward(m, images);
    const std::int64_t C = logits.dim(1);
    for (std::int64_t b = 0; b < bs; ++b) {
      const double* row = logits.data() + b * C;
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < C; ++c)
        if (row[c] > row[best]) best = c;  // ties resolve to the lowest index
      if (preds) preds->push_back(static_cast<int>(best));
      if (best != d.labels[static_cast<std::size_t>(start + b)]) ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(N);
}

std::string history_csv(const std::vector<EpochStat>& stats) {
  std::string out = "epoch,train_loss,valid_error\n";
  char buf[96];
  for (const auto& s : stats) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.4f\n", s.epoch, s.train_loss, s.valid_error);
    out += buf;
  }
  return out;
}

}  // namespace coattn
