#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "seg2hoi/autograd.hpp"

namespace seg2hoi::nn {

using ag::Matrix;
using ag::Var;

using ParamId = size_t;

/// Named, ordered parameter matrices. Frozen entries ride along in
/// checkpoints but are never touched by the optimizer.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    bool trainable = true;
  };

  ParamId add(std::string name, Matrix init, bool trainable = true);
  ParamId find(const std::string& name) const;

  Matrix& value(ParamId id) { return entries_[id].value; }
  const Matrix& value(ParamId id) const { return entries_[id].value; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  size_t size() const { return entries_.size(); }
  size_t scalar_count() const;

 private:
  std::vector<Entry> entries_;
};

/// Exposes parameters as tape leaves for one forward pass.
class Binder {
 public:
  Binder(ag::Tape& tape, const ParameterStore& store, bool track_gradients = true);

  Var operator()(ParamId id);
  ag::Tape& tape() { return tape_; }
  /// Gradient for every parameter after tape.backward(); zero when unused.
  std::vector<Matrix> gradients() const;

 private:
  ag::Tape& tape_;
  const ParameterStore& store_;
  bool track_;
  std::vector<Var> bound_;
};

/// Xavier-uniform weight (in x out) and zero bias.
struct Linear {
  ParamId weight = 0;
  ParamId bias = 0;
  int in = 0;
  int out = 0;

  static Linear create(ParameterStore& store, const std::string& name, int in, int out,
                       std::mt19937_64& rng);
  Var operator()(Binder& bind, const Var& x) const;
};

/// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(ParameterStore& store, const std::string& name, const std::vector<int>& dims,
                    std::mt19937_64& rng);
  Var operator()(Binder& bind, const Var& x) const;
  const Linear& last() const { return layers.back(); }
};

/// Multi-head scaled dot-product attention with input and output projections.
/// The query/key inputs arrive with any positional embedding already added.
struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, int dim,
                                   int heads, std::mt19937_64& rng);
  /// Keys with key_valid == false are excluded; a query with no valid key gets a zero update.
  Var operator()(Binder& bind, const Var& query, const Var& key, const Var& value,
                 const std::vector<bool>& key_valid) const;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled weight decay Adam over the trainable entries of a store.
class AdamW {
 public:
  AdamW(const ParameterStore& store, AdamWOptions options);
  void step(ParameterStore& store, const std::vector<Matrix>& grads, double lr);
  std::int64_t steps() const { return t_; }

 private:
  AdamWOptions opt_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

}  // namespace seg2hoi::nn
