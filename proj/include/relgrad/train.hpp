// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "relgrad/autodiff.hpp"
#include "relgrad/ir.hpp"
#include "relgrad/relation.hpp"

namespace relgrad {

struct TrainConfig {
  double lr = 0.1;
  int epochs = 100;
};

struct TrainResult {
  std::vector<double> losses;   // loss before the e-th update
  std::vector<Relation> inputs;  // final values, by slot - 1
};

// Full-batch SGD: every epoch runs forward and backward, then applies
// R <- R - lr * grad to each trainable slot. NonFiniteLoss names the epoch.
TrainResult train_sgd(const AnnotatedPlan& plan, std::vector<Relation> inputs, const std::vector<int>& trainable_slots,
                      const TrainConfig& cfg, const AutodiffOptions& opts = {});

// "epoch,loss" header, epochs numbered from 1.
std::string format_loss_csv(const std::vector<double>& losses);

}  // namespace relgrad
