#include "seg2hoi/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace seg2hoi::nn {

ParamId ParameterStore::add(std::string name, Matrix init, bool trainable) {
  for (const Entry& e : entries_) {
    if (e.name == name) throw std::invalid_argument("duplicate parameter: " + name);
  }
  entries_.push_back(Entry{std::move(name), std::move(init), trainable});
  return entries_.size() - 1;
}

ParamId ParameterStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("unknown parameter: " + name);
}

size_t ParameterStore::scalar_count() const {
  size_t n = 0;
  for (const Entry& e : entries_) n += static_cast<size_t>(e.value.size());
  return n;
}

Binder::Binder(ag::Tape& tape, const ParameterStore& store, bool track_gradients)
    : tape_(tape), store_(store), track_(track_gradients), bound_(store.size()) {}

Var Binder::operator()(ParamId id) {
  Var& slot = bound_.at(id);
  if (!slot.defined()) {
    const auto& entry = store_.entries()[id];
    slot = (track_ && entry.trainable) ? tape_.variable(entry.value) : tape_.constant(entry.value);
  }
  return slot;
}

std::vector<Matrix> Binder::gradients() const {
  std::vector<Matrix> out;
  out.reserve(bound_.size());
  for (size_t i = 0; i < bound_.size(); ++i) {
    const Matrix& shape = store_.entries()[i].value;
    const Var& v = bound_[i];
    if (v.defined() && v.requires_grad() && tape_.grad_or_empty(v.id()).size() == shape.size()) {
      out.push_back(tape_.grad_or_empty(v.id()));
    } else {
      out.push_back(Matrix::Zero(shape.rows(), shape.cols()));
    }
  }
  return out;
}

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".weight", std::move(w));
  l.bias = store.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Binder& bind, const Var& x) const {
  if (x.cols() != in) throw std::invalid_argument("Linear: input width mismatch");
  return ag::add_row(ag::matmul(x, bind(weight)), bind(bias));
}

Mlp Mlp::create(ParameterStore& store, const std::string& name, const std::vector<int>& dims,
                std::mt19937_64& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
  Mlp m;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.push_back(Linear::create(store, name + "." + std::to_string(i), dims[i], dims[i + 1], rng));
  }
  return m;
}

Var Mlp::operator()(Binder& bind, const Var& x) const {
  Var h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](bind, h);
    if (i + 1 < layers.size()) h = ag::relu(h);
  }
  return h;
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name,
                                              int dim, int heads, std::mt19937_64& rng) {
  if (heads <= 0 || dim % heads != 0) throw std::invalid_argument("dim must divide into heads");
  MultiHeadAttention a;
  a.heads = heads;
  a.q = Linear::create(store, name + ".q", dim, dim, rng);
  a.k = Linear::create(store, name + ".k", dim, dim, rng);
  a.v = Linear::create(store, name + ".v", dim, dim, rng);
  a.o = Linear::create(store, name + ".o", dim, dim, rng);
  return a;
}

Var MultiHeadAttention::operator()(Binder& bind, const Var& query, const Var& key,
                                   const Var& value, const std::vector<bool>& key_valid) const {
  bool any_key = false;
  for (bool b : key_valid) any_key = any_key || b;
  if (!any_key) return bind.tape().constant(Matrix::Zero(query.rows(), o.out));

  const Var qp = q(bind, query);
  const Var kp = k(bind, key);
  const Var vp = v(bind, value);
  const int dim = q.out;
  const int d = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Var> per_head;
  per_head.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = heads == 1 ? qp : ag::slice_cols(qp, h * d, d);
    const Var kh = heads == 1 ? kp : ag::slice_cols(kp, h * d, d);
    const Var vh = heads == 1 ? vp : ag::slice_cols(vp, h * d, d);
    const Var weights = ag::masked_softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt), key_valid);
    per_head.push_back(ag::matmul(weights, vh));
  }
  const Var merged = heads == 1 ? per_head.front() : ag::concat_cols(per_head);
  return o(bind, merged);
}

AdamW::AdamW(const ParameterStore& store, AdamWOptions options) : opt_(options) {
  for (const auto& e : store.entries()) {
    m_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    v_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
  }
}

void AdamW::step(ParameterStore& store, const std::vector<Matrix>& grads, double lr) {
  if (grads.size() != store.size() || m_.size() != store.size()) {
    throw std::invalid_argument("AdamW: gradient count does not match parameters");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < store.size(); ++i) {
    auto& entry = store.entries()[i];
    if (!entry.trainable) continue;
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * grads[i];
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * grads[i].cwiseProduct(grads[i]);
    entry.value *= (1.0 - lr * opt_.weight_decay);
    const Matrix step =
        (m_[i] / bc1).array() / ((v_[i] / bc2).array().sqrt() + opt_.eps);
    entry.value -= lr * step;
  }
}

}  // namespace seg2hoi::nn
