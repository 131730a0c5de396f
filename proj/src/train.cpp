// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include "relgrad/train.hpp"

#include <cmath>

#include "relgrad/error.hpp"
#include "relgrad/format.hpp"

namespace relgrad {

TrainResult train_sgd(const AnnotatedPlan& plan, std::vector<Relation> inputs, const std::vector<int>& trainable_slots,
                      const TrainConfig& cfg, const AutodiffOptions& opts) {
  if (!std::isfinite(cfg.lr) || cfg.lr < 0) fail(ErrorCode::InvalidArgument, "learning rate must be finite and >= 0");
  if (cfg.epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be >= 1");
  if (trainable_slots.empty()) fail(ErrorCode::InvalidArgument, "no trainable inputs");
  for (int s : trainable_slots) {
    if (s < 1 || static_cast<std::size_t>(s) > inputs.size()) {
      fail(ErrorCode::InvalidArgument, "trainable slot " + std::to_string(s) + " out of range");
    }
  }
  TrainResult out;
  out.losses.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int e = 1; e <= cfg.epochs; ++e) {
    const GradientReport rep = raautodiff(plan, inputs, opts);
    const double loss = rep.loss();
    if (!std::isfinite(loss)) fail(ErrorCode::NonFiniteLoss, "loss is " + format_double(loss) + " at epoch " + std::to_string(e));
    out.losses.push_back(loss);
    if (cfg.lr == 0.0) continue;
    for (int s : trainable_slots) {
      Relation& r = inputs[static_cast<std::size_t>(s) - 1];
      r = relation_add(r, relation_scale(rep.gradient(s), -cfg.lr));
    }
  }
  out.inputs = std::move(inputs);
  return out;
}

std::string format_loss_csv(const std::vector<double>& losses) {
  std::string out = "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    out += std::to_string(i + 1) + "," + format_double(losses[i]) + "\n";
  }
  return out;
}

}  // namespace relgrad
