/*
 * Copyright 2026 The kgcascade Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "kgc/graph_store.hpp"
#include "kgc/kge/model.hpp"

namespace kgc::kge {

enum class LossKind { kSelfAdversarial, kMarginRanking };

inline std::string_view loss_name(LossKind k) {
  return k == LossKind::kSelfAdversarial ? "self_adversarial" : "margin_ranking";
}

inline LossKind parse_loss(std::string_view name) {
  if (name == "self_adversarial") return LossKind::kSelfAdversarial;
  if (name == "margin_ranking") return LossKind::kMarginRanking;
  throw Error("unknown loss '" + std::string(name) + "'");
}

struct TrainConfig {
  std::size_t batch_size = 1000;
  std::size_t negative_sample_size = 1000;
  double learning_rate = 0.1;
  std::size_t lr_decay_step = 2000;
  double lr_decay_factor = 0.1;
  double regularization = 1e-9;
  // Learning rate of the projection layer ("entity encoder").
  double encoder_learning_rate = 4e-5;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 0;
  double adversarial_temperature = 1.0;
  LossKind loss = LossKind::kSelfAdversarial;
  std::size_t num_threads = 1;

  // Defaults used for NOTE.
  static TrainConfig note_defaults() { return {}; }

  // TransE and ComplEx run wider batches and negative pools.
  static TrainConfig wide_defaults() {
    TrainConfig c;
    c.batch_size = 16384;
    c.negative_sample_size = 16384;
    return c;
  }

  void validate() const {
    if (batch_size == 0 || negative_sample_size == 0 || lr_decay_step == 0 ||
        max_steps == 0 || num_threads == 0) {
      throw Error("training sizes must be positive");
    }
    if (learning_rate < 0 || encoder_learning_rate < 0 || regularization < 0 ||
        !(lr_decay_factor > 0) || adversarial_temperature < 0) {
      throw Error("training rates must be non-negative");
    }
  }
};

inline constexpr std::size_t kDefaultDimNote = 200;
inline constexpr std::size_t kDefaultDimWide = 600;

// Positives plus `negatives_per_positive` corrupted tails for each.
struct Batch {
  std::vector<Triple> positives;
  std::vector<EntityId> negatives;
  std::size_t negatives_per_positive = 0;

  std::span<const EntityId> negatives_of(std::size_t i) const {
    return {negatives.data() + i * negatives_per_positive, negatives_per_positive};
  }
};

inline Batch sample_batch(const KnowledgeGraph& kg, std::size_t batch_size,
                          std::size_t negatives, std::mt19937_64& rng) {
  if (kg.num_triples() == 0) throw Error("cannot train on an empty graph");
  Batch b;
  b.negatives_per_positive = negatives;
  std::uniform_int_distribution<std::size_t> pick_triple(0, kg.num_triples() - 1);
  std::uniform_int_distribution<EntityId> pick_entity(
      0, static_cast<EntityId>(kg.num_entities() - 1));
  b.positives.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    b.positives.push_back(kg.triples()[pick_triple(rng)]);
  }
  b.negatives.resize(batch_size * negatives);
  for (auto& e : b.negatives) e = pick_entity(rng);
  return b;
}

template <class Real>
struct Gradient {
  std::unordered_map<EntityId, std::vector<Real>> entity;
  std::unordered_map<RelationId, std::vector<Real>> relation;
  std::vector<Real> projection_weight;
  std::vector<Real> projection_bias;
};

// Self-adversarial weights of one (positive, direction) term, in the order
// the loss visits them: positive-major, then head-to-tail before tail-to-head.
using AdversarialWeights = std::vector<std::vector<double>>;

namespace detail {

inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

template <class Real>
struct StepState {
  std::vector<EntityId> entities;
  std::unordered_map<EntityId, std::size_t> entity_slot;
  std::vector<Real> repr;  // slots x width
  std::vector<Real> pre;   // projection pre-activations
  std::vector<RelationId> relations;
  std::unordered_map<RelationId, std::size_t> relation_slot;
  std::vector<NoteRelation<Real>> note;
};

template <class Real>
struct Partial {
  double loss = 0.0;
  std::vector<Real> d_repr;
  std::vector<Real> d_rel;  // TransE / ComplEx
  std::vector<NoteRelationGrad<Real>> d_note;
  std::vector<std::vector<double>> weights;
};

template <class Real>
StepState<Real> prepare(const KgeModel<Real>& m, const Batch& batch) {
  StepState<Real> st;
  auto add_entity = [&](EntityId e) {
    if (st.entity_slot.emplace(e, st.entities.size()).second) st.entities.push_back(e);
  };
  for (const auto& p : batch.positives) {
    add_entity(p.h);
    add_entity(p.t);
    if (st.relation_slot.emplace(p.r, st.relations.size()).second) {
      st.relations.push_back(p.r);
    }
  }
  for (auto e : batch.negatives) add_entity(e);
  const auto w = m.entity_width();
  st.repr.resize(st.entities.size() * w);
  if (m.projection) st.pre.resize(st.entities.size() * w);
  for (std::size_t s = 0; s < st.entities.size(); ++s) {
    const auto e = st.entities[s];
    if (e >= m.num_entities) throw Error("entity id out of range");
    std::span<Real> out(st.repr.data() + s * w, w);
    if (m.projection) {
      project_entity<Real>(m, e, std::span<Real>(st.pre.data() + s * w, w), out);
    } else {
      auto row = m.entity_row(e);
      std::copy(row.begin(), row.end(), out.begin());
    }
  }
  if (m.kind == ModelKind::kNote) {
    st.note.reserve(st.relations.size());
    for (auto r : st.relations) st.note.emplace_back(m.relation_row(r), m.dim, m.group_size);
  }
  return st;
}

// Loss terms and gradients for positives [begin, end).
template <class Real>
void accumulate(const KgeModel<Real>& m, const Batch& batch,
                const TrainConfig& cfg, const StepState<Real>& st,
                std::size_t begin, std::size_t end, bool want_grad,
                const AdversarialWeights* frozen, bool keep_weights,
                Partial<Real>& out) {
  const auto w = m.entity_width();
  const auto rw = m.relation_width();
  const auto n = batch.negatives_per_positive;
  const double inv_batch = 1.0 / static_cast<double>(batch.positives.size());
  if (want_grad) {
    out.d_repr.assign(st.entities.size() * w, Real(0));
    if (m.kind == ModelKind::kNote) {
      out.d_note.assign(st.relations.size(), NoteRelationGrad<Real>(m.num_groups(), m.group_size));
    } else {
      out.d_rel.assign(st.relations.size() * rw, Real(0));
    }
  }
  const bool note = m.kind == ModelKind::kNote;
  const std::size_t directions = note ? 2 : 1;
  std::vector<double> neg_scores(n), neg_grad(n);

  auto repr = [&](EntityId e) {
    return std::span<const Real>(st.repr.data() + st.entity_slot.at(e) * w, w);
  };
  auto d_repr = [&](EntityId e) {
    return std::span<Real>(out.d_repr.data() + st.entity_slot.at(e) * w, w);
  };

  for (std::size_t i = begin; i < end; ++i) {
    const auto& pos = batch.positives[i];
    const auto rslot = st.relation_slot.at(pos.r);
    const auto rel_row = m.relation_row(pos.r);
    auto negs = batch.negatives_of(i);
    for (std::size_t dir = 0; dir < directions; ++dir) {
      const auto nd = dir == 0 ? NoteDirection::kHeadToTail : NoteDirection::kTailToHead;
      auto score_of = [&](EntityId t) -> double {
        switch (m.kind) {
          case ModelKind::kTransE:
            return transe_score<Real>(repr(pos.h), rel_row, repr(t), m.gamma);
          case ModelKind::kComplEx:
            return complex_score<Real>(repr(pos.h), rel_row, repr(t));
          case ModelKind::kNote:
            return note_score<Real>(st.note[rslot], repr(pos.h), repr(t), nd, m.gamma);
        }
        return 0.0;
      };
      auto backward = [&](EntityId t, double g) {
        if (g == 0.0) return;
        const Real up = static_cast<Real>(g);
        switch (m.kind) {
          case ModelKind::kTransE:
            transe_backward<Real>(repr(pos.h), rel_row, repr(t), up, d_repr(pos.h),
                                  std::span<Real>(out.d_rel.data() + rslot * rw, rw),
                                  d_repr(t));
            break;
          case ModelKind::kComplEx:
            complex_backward<Real>(repr(pos.h), rel_row, repr(t), up, d_repr(pos.h),
                                   std::span<Real>(out.d_rel.data() + rslot * rw, rw),
                                   d_repr(t));
            break;
          case ModelKind::kNote:
            note_backward<Real>(st.note[rslot], repr(pos.h), repr(t), nd, up,
                                d_repr(pos.h), d_repr(t), out.d_note[rslot]);
            break;
        }
      };

      const double s_pos = score_of(pos.t);
      for (std::size_t j = 0; j < n; ++j) neg_scores[j] = score_of(negs[j]);
      double loss = 0.0, g_pos = 0.0;
      if (cfg.loss == LossKind::kSelfAdversarial) {
        std::vector<double> weights(n);
        const std::size_t term = i * directions + dir;
        if (frozen) {
          weights = frozen->at(term);
        } else {
          double mx = -std::numeric_limits<double>::infinity();
          for (double s : neg_scores) mx = std::max(mx, cfg.adversarial_temperature * s);
          double z = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            weights[j] = std::exp(cfg.adversarial_temperature * neg_scores[j] - mx);
            z += weights[j];
          }
          for (auto& x : weights) x /= z;
        }
        double neg_loss = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          neg_loss -= weights[j] * log_sigmoid(-neg_scores[j]);
          neg_grad[j] = 0.5 * weights[j] * sigmoid(neg_scores[j]);
        }
        loss = 0.5 * (-log_sigmoid(s_pos) + neg_loss);
        g_pos = 0.5 * (sigmoid(s_pos) - 1.0);
        if (keep_weights) out.weights.push_back(std::move(weights));
      } else {
        const double margin = static_cast<double>(m.gamma);
        for (std::size_t j = 0; j < n; ++j) {
          const double v = margin - s_pos + neg_scores[j];
          if (v > 0) {
            loss += v / static_cast<double>(n);
            g_pos -= 1.0 / static_cast<double>(n);
            neg_grad[j] = 1.0 / static_cast<double>(n);
          } else {
            neg_grad[j] = 0.0;
          }
        }
      }
      out.loss += loss * inv_batch;
      if (want_grad) {
        backward(pos.t, g_pos * inv_batch);
        for (std::size_t j = 0; j < n; ++j) backward(negs[j], neg_grad[j] * inv_batch);
      }
    }
  }
}

}  // namespace detail

// Mean loss over the batch plus L2 regularization of the parameter rows the
// positives touch. Self-adversarial weights are treated as constants; pass
// `frozen` to pin them (used for finite-difference checks).
template <class Real>
double loss_and_gradient(const KgeModel<Real>& m, const Batch& batch,
                         const TrainConfig& cfg, Gradient<Real>* grad,
                         const AdversarialWeights* frozen = nullptr,
                         AdversarialWeights* weights_out = nullptr) {
  if (batch.positives.empty()) throw Error("empty batch");
  auto st = detail::prepare(m, batch);
  const bool want_grad = grad != nullptr;
  const std::size_t threads =
      frozen ? 1 : std::min(cfg.num_threads, batch.positives.size());
  std::vector<detail::Partial<Real>> parts(threads);
  const auto chunk = (batch.positives.size() + threads - 1) / threads;
  auto run = [&](std::size_t k) {
    const auto b = std::min(batch.positives.size(), k * chunk);
    const auto e = std::min(batch.positives.size(), b + chunk);
    detail::accumulate(m, batch, cfg, st, b, e, want_grad, frozen,
                       weights_out != nullptr, parts[k]);
  };
  if (threads == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(run, k);
    for (auto& t : pool) t.join();
  }

  double loss = 0.0;
  for (auto& p : parts) loss += p.loss;
  if (weights_out) {
    weights_out->clear();
    for (auto& p : parts) {
      for (auto& w : p.weights) weights_out->push_back(std::move(w));
    }
  }

  const auto w = m.entity_width();
  const auto rw = m.relation_width();
  const double lambda = cfg.regularization;
  const double inv_batch = 1.0 / static_cast<double>(batch.positives.size());
  for (const auto& p : batch.positives) {
    double sq = 0.0;
    for (auto v : m.entity_row(p.h)) sq += static_cast<double>(v) * v;
    for (auto v : m.relation_row(p.r)) sq += static_cast<double>(v) * v;
    for (auto v : m.entity_row(p.t)) sq += static_cast<double>(v) * v;
    loss += lambda * sq * inv_batch;
  }
  if (!want_grad) return loss;

  for (std::size_t k = 1; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < parts[0].d_repr.size(); ++i) parts[0].d_repr[i] += parts[k].d_repr[i];
    for (std::size_t i = 0; i < parts[0].d_rel.size(); ++i) parts[0].d_rel[i] += parts[k].d_rel[i];
    for (std::size_t i = 0; i < parts[0].d_note.size(); ++i) parts[0].d_note[i] += parts[k].d_note[i];
  }
  auto& total = parts[0];

  grad->entity.clear();
  grad->relation.clear();
  if (m.projection) {
    grad->projection_weight.assign(m.projection->weight.size(), Real(0));
    grad->projection_bias.assign(m.projection->bias.size(), Real(0));
  } else {
    grad->projection_weight.clear();
    grad->projection_bias.clear();
  }
  for (std::size_t s = 0; s < st.entities.size(); ++s) {
    const auto e = st.entities[s];
    std::span<const Real> de(total.d_repr.data() + s * w, w);
    auto& row_grad = grad->entity[e];
    row_grad.assign(w, Real(0));
    if (!m.projection) {
      for (std::size_t j = 0; j < w; ++j) row_grad[j] += de[j];
      continue;
    }
    const auto& p = *m.projection;
    const auto in = p.input_dim();
    auto f = m.features->row(e);
    auto u = m.entity_row(e);
    for (std::size_t o = 0; o < p.output_dim; ++o) {
      Real dpre = de[o];
      if (p.activation == Activation::kRelu && st.pre[s * w + o] < 0) dpre = 0;
      if (dpre == Real(0)) continue;
      Real* gw = grad->projection_weight.data() + o * in;
      const Real* wrow = p.weight.data() + o * in;
      for (std::size_t i = 0; i < p.feature_dim; ++i) gw[i] += dpre * static_cast<Real>(f[i]);
      for (std::size_t i = 0; i < p.free_dim; ++i) {
        gw[p.feature_dim + i] += dpre * u[i];
        row_grad[i] += dpre * wrow[p.feature_dim + i];
      }
      grad->projection_bias[o] += dpre;
    }
  }
  for (std::size_t s = 0; s < st.relations.size(); ++s) {
    const auto r = st.relations[s];
    auto& row_grad = grad->relation[r];
    row_grad.assign(rw, Real(0));
    if (m.kind == ModelKind::kNote) {
      total.d_note[s].finalize(st.note[s], row_grad);
    } else {
      for (std::size_t j = 0; j < rw; ++j) row_grad[j] = total.d_rel[s * rw + j];
    }
  }
  if (lambda > 0) {
    const Real c = static_cast<Real>(2.0 * lambda * inv_batch);
    for (const auto& p : batch.positives) {
      auto add = [&](auto& g, auto row) {
        for (std::size_t j = 0; j < row.size(); ++j) g[j] += c * row[j];
      };
      add(grad->entity[p.h], m.entity_row(p.h));
      add(grad->entity[p.t], m.entity_row(p.t));
      add(grad->relation[p.r], m.relation_row(p.r));
    }
  }
  return loss;
}

template <class Real>
void apply_sgd(KgeModel<Real>& m, const Gradient<Real>& g, double lr,
               double encoder_lr) {
  const Real step = static_cast<Real>(lr);
  for (const auto& [e, d] : g.entity) {
    auto row = m.entity_row(e);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] -= step * d[j];
  }
  for (const auto& [r, d] : g.relation) {
    auto row = m.relation_row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] -= step * d[j];
  }
  if (m.projection) {
    const Real enc = static_cast<Real>(encoder_lr);
    auto& p = *m.projection;
    for (std::size_t j = 0; j < p.weight.size(); ++j) p.weight[j] -= enc * g.projection_weight[j];
    for (std::size_t j = 0; j < p.bias.size(); ++j) p.bias[j] -= enc * g.projection_bias[j];
  }
}

inline double learning_rate_at(const TrainConfig& cfg, double base, std::size_t step) {
  return base * std::pow(cfg.lr_decay_factor,
                         static_cast<double>(step / cfg.lr_decay_step));
}

struct TrainResult {
  std::vector<double> loss_trace;
};

// Minibatch SGD with uniform tail corruption. Throws on a non-finite loss,
// naming the step.
template <class Real>
TrainResult train(KgeModel<Real>& m, const KnowledgeGraph& kg,
                  const TrainConfig& cfg) {
  cfg.validate();
  m.validate_shape();
  if (kg.num_entities() != m.num_entities || kg.num_relations() != m.num_relations) {
    throw Error("graph and model vocabularies differ");
  }
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  result.loss_trace.reserve(cfg.max_steps);
  Gradient<Real> grad;
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    auto batch = sample_batch(kg, cfg.batch_size, cfg.negative_sample_size, rng);
    double loss = loss_and_gradient(m, batch, cfg, &grad);
    if (!std::isfinite(loss)) {
      throw Error("training diverged at step " + std::to_string(step));
    }
    result.loss_trace.push_back(loss);
    apply_sgd(m, grad, learning_rate_at(cfg, cfg.learning_rate, step),
              learning_rate_at(cfg, cfg.encoder_learning_rate, step));
    if (!m.all_finite()) {
      throw Error("training diverged at step " + std::to_string(step));
    }
  }
  return result;
}

}  // namespace kgc::kge
