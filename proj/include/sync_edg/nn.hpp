// Copyright 2026 The sync-edg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "sync_edg/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sync_edg::nn {

using ad::Matrix;
using ad::Tensor;

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

enum class Activation { kRelu, kTanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

// y = x W + b with W stored (in x out). Uniform(-1/sqrt(in), 1/sqrt(in)) init.
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng, bool bias = true);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  int in_features() const { return static_cast<int>(weight_.rows()); }
  int out_features() const { return static_cast<int>(weight_.cols()); }

 private:
  Tensor weight_;
  Tensor bias_;
  bool has_bias_ = false;
};

// Fully connected stack; the activation is applied between layers only.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> widths, Activation act, std::mt19937_64& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  int in_features() const { return layers_.front().in_features(); }
  int out_features() const { return layers_.back().out_features(); }

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::kRelu;
};

Tensor activate(const Tensor& x, Activation act);

// Hidden and cell state of a batch of LSTM sequences, one row per sequence.
struct LstmState {
  Tensor h;
  Tensor c;
};

// Single-layer LSTM cell with input, forget, cell and output gates.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(int in, int hidden, std::mt19937_64& rng);

  LstmState step(const Tensor& x, const LstmState& state) const;
  LstmState zero_state(Eigen::Index batch) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  int input_size() const { return static_cast<int>(w_ih_.rows()); }
  int hidden_size() const { return hidden_; }

 private:
  Tensor w_ih_;  // in x 4H
  Tensor w_hh_;  // H x 4H
  Tensor bias_;  // 1 x 4H
  int hidden_ = 0;
};

// Adam with bias correction, matching the common deep-learning defaults.
struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global-norm gradient clipping; <= 0 disables it.
  double clip_norm = 10.0;
};

class Adam {
 public:
  Adam(ParameterList params, AdamOptions options);

  void zero_grad();
  // Returns the pre-clipping global gradient norm.
  double step();
  std::int64_t steps() const { return t_; }

 private:
  ParameterList params_;
  AdamOptions opt_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

double global_grad_norm(const ParameterList& params);

}  // namespace sync_edg::nn
