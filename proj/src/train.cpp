#include "henet/train.hpp"

#include <numeric>

namespace henet {

namespace {

void fill_batch(const LabeledDataset& data, const std::vector<Index>& order, std::size_t start,
                Index batch, Index crop, bool augment, Rng& rng, Tensor<float>& x,
                std::vector<int>& labels) {
  const Index plane = crop * crop;
  for (Index b = 0; b < batch; ++b) {
    const Index idx = order[start + static_cast<std::size_t>(b)];
    Tensor<float> img = data.normalized_image(idx);
    Tensor<float> view = augment ? augment_sample(img, rng, crop) : center_crop(img, crop);
    std::memcpy(x.plane(b, 0), view.data(), sizeof(float) * 3 * static_cast<std::size_t>(plane));
    labels[static_cast<std::size_t>(b)] = data.labels[static_cast<std::size_t>(idx)];
  }
}

}  // namespace

TrainResult train_loop(ModelGraph<float>& g, const LabeledDataset& data, const TrainConfig& cfg,
                       std::ostream& log) {
  cfg.validate();
  if (data.count < 1) throw DataError("train_loop: empty dataset");
  const Index crop = g.def.input.h;
  if (g.def.input.c != 3 || data.image_size < crop)
    throw DataError("train_loop: dataset images " + std::to_string(data.image_size) +
                    "px do not fit graph input " + std::to_string(crop) + "px");
  g.input_means = data.channel_means;

  auto params = trainable_parameters(g);
  auto state = OptimizerState<float>::from_params(params);
  Rng rng(cfg.seed);

  std::vector<Index> order(static_cast<std::size_t>(data.count));
  std::iota(order.begin(), order.end(), Index(0));
  shuffle_in_place(order, rng);
  std::size_t cursor = 0;

  const Index batch = std::min<Index>(cfg.batch_size, data.count);
  Tensor<float> x(Shape{batch, 3, crop, crop});
  std::vector<int> labels(static_cast<std::size_t>(batch));

  TrainResult result;
  for (long long iter = 0; iter < cfg.max_iter; ++iter) {
    if (cursor + static_cast<std::size_t>(batch) > order.size()) {
      shuffle_in_place(order, rng);
      cursor = 0;
    }
    fill_batch(data, order, cursor, batch, crop, cfg.augment, rng, x, labels);
    cursor += static_cast<std::size_t>(batch);

    ForwardTrace<float> tr = forward_trace(g, x, Mode::Train);
    SoftmaxLoss<float> loss = softmax_cross_entropy(tr.acts.back(), labels);
    if (!std::isfinite(static_cast<double>(loss.loss)))
      throw NumericError("non-finite loss at iteration " + std::to_string(iter));

    GradientSet<float> grads = backward_model(g, tr, loss.grad_scores);
    const double lr = multistep_lr(iter, cfg);
    sgd_nesterov_step(params, grads.by_param, state, lr, cfg);

    result.iterations = iter + 1;
    result.final_loss = static_cast<double>(loss.loss);
    result.final_lr = lr;

    const bool log_now = cfg.log_every > 0 && (iter + 1) % cfg.log_every == 0;
    const bool eval_now = cfg.eval_every > 0 && (iter + 1) % cfg.eval_every == 0;
    double acc = -1.0;
    if (eval_now) acc = evaluate(g, data);
    if (log_now || eval_now) {
      log << "iter=" << (iter + 1) << " lr=" << lr << " loss=" << loss.loss;
      if (acc >= 0.0) log << " acc=" << acc;
      log << "\n";
    }
    if (eval_now && cfg.stop_accuracy > 0.0 && acc >= cfg.stop_accuracy) {
      result.stopped_early = true;
      result.train_accuracy = acc;
      return result;
    }
  }
  result.train_accuracy = cfg.max_iter > 0 ? evaluate(g, data) : 0.0;
  return result;
}

double evaluate(ModelGraph<float>& g, const LabeledDataset& data) {
  if (data.count < 1) throw DataError("evaluate: empty dataset");
  const Index crop = g.def.input.h;
  if (data.image_size < crop)
    throw DataError("evaluate: dataset images smaller than graph input");
  const Index plane = crop * crop;
  const Index batch_cap = 128;
  long long correct = 0;
  for (Index start = 0; start < data.count; start += batch_cap) {
    const Index b = std::min<Index>(batch_cap, data.count - start);
    Tensor<float> x(Shape{b, 3, crop, crop});
    for (Index i = 0; i < b; ++i) {
      Tensor<float> img = data.normalized_image(start + i);
      Tensor<float> view = center_crop(img, crop);
      std::memcpy(x.plane(i, 0), view.data(), sizeof(float) * 3 * static_cast<std::size_t>(plane));
    }
    const Tensor<float> scores = forward_model(g, x, Mode::Infer);
    const std::vector<int> pred = argmax_scores(scores);
    for (Index i = 0; i < b; ++i)
      if (pred[static_cast<std::size_t>(i)] == data.labels[static_cast<std::size_t>(start + i)])
        ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.count);
}

}  // namespace henet
