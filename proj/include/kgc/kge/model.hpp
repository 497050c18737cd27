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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgc/candidate_list.hpp"
#include "kgc/features.hpp"
#include "kgc/graph_store.hpp"
#include "kgc/kge/gram_schmidt.hpp"

namespace kgc::kge {

enum class ModelKind { kTransE, kComplEx, kNote };
enum class Activation { kNone, kRelu };
enum class NoteDirection { kHeadToTail, kTailToHead };

inline constexpr double kDefaultGamma = 3.0;
inline constexpr std::size_t kDefaultNoteGroupSize = 20;
// exp(s_r) is evaluated on s_r clamped to this range.
inline constexpr double kScaleClamp = 10.0;

inline std::string_view kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kTransE: return "transe";
    case ModelKind::kComplEx: return "complex";
    case ModelKind::kNote: return "note";
  }
  return "?";
}

inline ModelKind parse_kind(std::string_view name) {
  for (auto k : {ModelKind::kTransE, ModelKind::kComplEx, ModelKind::kNote}) {
    if (kind_name(k) == name) return k;
  }
  throw Error("unknown model kind '" + std::string(name) + "'");
}

// act(W [feature ; free] + b). The free part is the entity's trainable row.
template <class Real>
struct ProjectionLayer {
  std::size_t feature_dim = 0;
  std::size_t free_dim = 0;
  std::size_t output_dim = 0;
  std::vector<Real> weight;  // output_dim x (feature_dim + free_dim)
  std::vector<Real> bias;    // output_dim
  Activation activation = Activation::kNone;

  std::size_t input_dim() const { return feature_dim + free_dim; }
};

// Parameters of one embedding model.
//
//   TransE   entity: dim          relation: dim
//   ComplEx  entity: [re | im]    relation: [re | im]        (2 * dim each)
//   NOTE     entity: dim          relation: [M_1..M_K | s]   (K = dim / group)
//
// With a projection layer the entity rows hold the free vectors and the
// representation is computed from the attached features.
template <class Real>
struct KgeModel {
  ModelKind kind = ModelKind::kTransE;
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::size_t dim = 0;
  std::size_t group_size = kDefaultNoteGroupSize;
  Real gamma = static_cast<Real>(kDefaultGamma);
  std::vector<Real> entity;
  std::vector<Real> relation;
  std::optional<ProjectionLayer<Real>> projection;
  std::shared_ptr<const FeatureMatrix> features;

  std::size_t entity_width() const {
    return kind == ModelKind::kComplEx ? 2 * dim : dim;
  }
  std::size_t relation_width() const {
    switch (kind) {
      case ModelKind::kTransE: return dim;
      case ModelKind::kComplEx: return 2 * dim;
      case ModelKind::kNote: return dim * group_size + dim;
    }
    return 0;
  }
  std::size_t num_groups() const { return dim / group_size; }

  std::span<const Real> entity_row(EntityId e) const {
    return {entity.data() + static_cast<std::size_t>(e) * entity_width(), entity_width()};
  }
  std::span<Real> entity_row(EntityId e) {
    return {entity.data() + static_cast<std::size_t>(e) * entity_width(), entity_width()};
  }
  std::span<const Real> relation_row(RelationId r) const {
    return {relation.data() + static_cast<std::size_t>(r) * relation_width(), relation_width()};
  }
  std::span<Real> relation_row(RelationId r) {
    return {relation.data() + static_cast<std::size_t>(r) * relation_width(), relation_width()};
  }

  void validate_shape() const {
    if (dim == 0) throw Error("model dim must be positive");
    if (kind == ModelKind::kNote && (group_size == 0 || dim % group_size != 0)) {
      throw Error("NOTE dim " + std::to_string(dim) +
                  " is not divisible by group size " + std::to_string(group_size));
    }
    if (entity.size() != num_entities * entity_width() ||
        relation.size() != num_relations * relation_width()) {
      throw Error("parameter matrices do not match the model shape");
    }
    if (projection) {
      if (!features || features->rows != num_entities ||
          features->dim != projection->feature_dim) {
        throw Error("projection layer requires features covering every entity");
      }
      if (projection->free_dim != entity_width() ||
          projection->output_dim != entity_width()) {
        throw Error("projection layer width mismatch");
      }
    }
  }

  bool all_finite() const {
    auto finite = [](const std::vector<Real>& v) {
      return std::all_of(v.begin(), v.end(), [](Real x) { return std::isfinite(x); });
    };
    if (!finite(entity) || !finite(relation)) return false;
    return !projection || (finite(projection->weight) && finite(projection->bias));
  }
};

// Pre-activation and output of the projection for one entity.
template <class Real>
void project_entity(const KgeModel<Real>& model, EntityId e,
                    std::span<Real> pre, std::span<Real> out) {
  const auto& p = *model.projection;
  auto f = model.features->row(e);
  auto u = model.entity_row(e);
  const auto in = p.input_dim();
  for (std::size_t o = 0; o < p.output_dim; ++o) {
    const Real* w = p.weight.data() + o * in;
    Real acc = p.bias[o];
    for (std::size_t i = 0; i < p.feature_dim; ++i) acc += w[i] * static_cast<Real>(f[i]);
    for (std::size_t i = 0; i < p.free_dim; ++i) acc += w[p.feature_dim + i] * u[i];
    pre[o] = acc;
    out[o] = (p.activation == Activation::kRelu && acc < 0) ? Real(0) : acc;
  }
}

template <class Real>
std::vector<Real> entity_representation(const KgeModel<Real>& model, EntityId e) {
  if (e >= model.num_entities) throw Error("entity id out of range");
  if (!model.projection) {
    auto row = model.entity_row(e);
    return {row.begin(), row.end()};
  }
  std::vector<Real> pre(model.entity_width()), out(model.entity_width());
  project_entity<Real>(model, e, pre, out);
  return out;
}

// ---- TransE: gamma - ||h + r - t|| --------------------------------------

template <class Real>
Real transe_score(std::span<const Real> h, std::span<const Real> r,
                  std::span<const Real> t, Real gamma) {
  Real s = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    Real d = h[i] + r[i] - t[i];
    s += d * d;
  }
  return gamma - std::sqrt(s);
}

template <class Real>
void transe_backward(std::span<const Real> h, std::span<const Real> r,
                     std::span<const Real> t, Real upstream, std::span<Real> dh,
                     std::span<Real> dr, std::span<Real> dt) {
  Real s = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    Real d = h[i] + r[i] - t[i];
    s += d * d;
  }
  Real norm = std::sqrt(s);
  if (norm == Real(0)) return;
  for (std::size_t i = 0; i < h.size(); ++i) {
    Real g = -upstream * (h[i] + r[i] - t[i]) / norm;
    dh[i] += g;
    dr[i] += g;
    dt[i] -= g;
  }
}

// ---- ComplEx: Re(<w, h, conj(t)>) ------------------------------------------

template <class Real>
Real complex_score(std::span<const Real> h, std::span<const Real> w,
                   std::span<const Real> t) {
  const auto d = h.size() / 2;
  Real s = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const Real hr = h[i], hi = h[d + i], wr = w[i], wi = w[d + i], tr = t[i], ti = t[d + i];
    s += wr * (hr * tr + hi * ti) + wi * (hr * ti - hi * tr);
  }
  return s;
}

template <class Real>
void complex_backward(std::span<const Real> h, std::span<const Real> w,
                      std::span<const Real> t, Real g, std::span<Real> dh,
                      std::span<Real> dw, std::span<Real> dt) {
  const auto d = h.size() / 2;
  for (std::size_t i = 0; i < d; ++i) {
    const Real hr = h[i], hi = h[d + i], wr = w[i], wi = w[d + i], tr = t[i], ti = t[d + i];
    dw[i] += g * (hr * tr + hi * ti);
    dw[d + i] += g * (hr * ti - hi * tr);
    dh[i] += g * (wr * tr + wi * ti);
    dh[d + i] += g * (wr * ti - wi * tr);
    dt[i] += g * (wr * hr - wi * hi);
    dt[d + i] += g * (wr * hi + wi * hr);
  }
}

// ---- NOTE ------------------------------------------------------------------

// Per-relation quantities shared by every NOTE score of that relation:
// the orthogonalized blocks and the normalized exp(+-s) scales.
template <class Real>
struct NoteRelation {
  std::size_t groups = 0;
  std::size_t group_size = 0;
  std::vector<GramSchmidt<Real>> phi;
  std::vector<Real> raw_scale;          // s_r, length dim
  std::vector<Real> exp_head, exp_tail; // exp(clamp(s)), exp(clamp(-s))
  // Spectral norm of diag(exp(+-s)) per group, i.e. its largest entry,
  // and where it sits.
  std::vector<Real> norm_head, norm_tail;
  std::vector<std::size_t> arg_head, arg_tail;
  std::vector<Real> scale_head, scale_tail;

  NoteRelation(std::span<const Real> row, std::size_t dim, std::size_t g)
      : groups(dim / g), group_size(g) {
    const auto block = g * g;
    phi.reserve(groups);
    for (std::size_t i = 0; i < groups; ++i) {
      phi.emplace_back(row.subspan(i * block, block), g);
    }
    auto s = row.subspan(groups * block, dim);
    raw_scale.assign(s.begin(), s.end());
    exp_head.resize(dim);
    exp_tail.resize(dim);
    scale_head.resize(dim);
    scale_tail.resize(dim);
    norm_head.assign(groups, Real(0));
    norm_tail.assign(groups, Real(0));
    arg_head.assign(groups, 0);
    arg_tail.assign(groups, 0);
    const Real lim = static_cast<Real>(kScaleClamp);
    for (std::size_t k = 0; k < dim; ++k) {
      exp_head[k] = std::exp(std::clamp(s[k], -lim, lim));
      exp_tail[k] = std::exp(std::clamp(-s[k], -lim, lim));
    }
    for (std::size_t i = 0; i < groups; ++i) {
      const auto b = i * g, e = (i + 1) * g;
      arg_head[i] = static_cast<std::size_t>(
          std::max_element(exp_head.begin() + b, exp_head.begin() + e) - exp_head.begin());
      arg_tail[i] = static_cast<std::size_t>(
          std::max_element(exp_tail.begin() + b, exp_tail.begin() + e) - exp_tail.begin());
      norm_head[i] = exp_head[arg_head[i]];
      norm_tail[i] = exp_tail[arg_tail[i]];
      for (std::size_t k = b; k < e; ++k) {
        scale_head[k] = exp_head[k] / norm_head[i];
        scale_tail[k] = exp_tail[k] / norm_tail[i];
      }
    }
  }
};

// Accumulated gradients for one NoteRelation.
template <class Real>
struct NoteRelationGrad {
  std::vector<Real> dq;           // groups * g * g
  std::vector<Real> d_scale_head;  // dim
  std::vector<Real> d_scale_tail;  // dim

  NoteRelationGrad(std::size_t groups, std::size_t g)
      : dq(groups * g * g, Real(0)),
        d_scale_head(groups * g, Real(0)),
        d_scale_tail(groups * g, Real(0)) {}

  NoteRelationGrad& operator+=(const NoteRelationGrad& o) {
    for (std::size_t i = 0; i < dq.size(); ++i) dq[i] += o.dq[i];
    for (std::size_t i = 0; i < d_scale_head.size(); ++i) {
      d_scale_head[i] += o.d_scale_head[i];
      d_scale_tail[i] += o.d_scale_tail[i];
    }
    return *this;
  }

  // Pulls the gradient back to the raw relation row [M blocks | s].
  void finalize(const NoteRelation<Real>& rel, std::span<Real> d_row) const {
    const auto g = rel.group_size;
    const auto block = g * g;
    const Real lim = static_cast<Real>(kScaleClamp);
    for (std::size_t i = 0; i < rel.groups; ++i) {
      auto dm = rel.phi[i].backward(std::span<const Real>(dq.data() + i * block, block));
      for (std::size_t k = 0; k < block; ++k) d_row[i * block + k] += dm[k];
      Real dot_h = 0, dot_t = 0;
      for (std::size_t k = i * g; k < (i + 1) * g; ++k) {
        dot_h += rel.scale_head[k] * d_scale_head[k];
        dot_t += rel.scale_tail[k] * d_scale_tail[k];
      }
      for (std::size_t k = i * g; k < (i + 1) * g; ++k) {
        const Real s = rel.raw_scale[k];
        Real da_h = d_scale_head[k] / rel.norm_head[i];
        Real da_t = d_scale_tail[k] / rel.norm_tail[i];
        if (k == rel.arg_head[i]) da_h -= dot_h / rel.norm_head[i];
        if (k == rel.arg_tail[i]) da_t -= dot_t / rel.norm_tail[i];
        Real ds = 0;
        if (s > -lim && s < lim) ds = da_h * rel.exp_head[k] - da_t * rel.exp_tail[k];
        d_row[rel.groups * block + k] += ds;
      }
    }
  }
};

// gamma - sum_i || scale(i) * phi(M_i)^(T) x(i) - y(i) ||, where x is the
// transformed side (h for head-to-tail, t with the transposed block and
// exp(-s) scales for tail-to-head).
template <class Real>
Real note_score(const NoteRelation<Real>& rel, std::span<const Real> h,
                std::span<const Real> t, NoteDirection dir, Real gamma) {
  const auto g = rel.group_size;
  const bool forward = dir == NoteDirection::kHeadToTail;
  const auto& x = forward ? h : t;
  const auto& y = forward ? t : h;
  const auto& scale = forward ? rel.scale_head : rel.scale_tail;
  Real total = 0;
  for (std::size_t i = 0; i < rel.groups; ++i) {
    const auto& q = rel.phi[i].q();
    Real dist = 0;
    for (std::size_t a = 0; a < g; ++a) {
      Real v = 0;
      for (std::size_t b = 0; b < g; ++b) {
        v += (forward ? q[a * g + b] : q[b * g + a]) * x[i * g + b];
      }
      Real u = scale[i * g + a] * v - y[i * g + a];
      dist += u * u;
    }
    total += std::sqrt(dist);
  }
  return gamma - total;
}

template <class Real>
void note_backward(const NoteRelation<Real>& rel, std::span<const Real> h,
                   std::span<const Real> t, NoteDirection dir, Real upstream,
                   std::span<Real> dh, std::span<Real> dt,
                   NoteRelationGrad<Real>& drel) {
  const auto g = rel.group_size;
  const bool forward = dir == NoteDirection::kHeadToTail;
  const auto& x = forward ? h : t;
  const auto& y = forward ? t : h;
  auto& dx = forward ? dh : dt;
  auto& dy = forward ? dt : dh;
  const auto& scale = forward ? rel.scale_head : rel.scale_tail;
  auto& dscale = forward ? drel.d_scale_head : drel.d_scale_tail;
  std::vector<Real> v(g), u(g);
  for (std::size_t i = 0; i < rel.groups; ++i) {
    const auto& q = rel.phi[i].q();
    Real dist = 0;
    for (std::size_t a = 0; a < g; ++a) {
      Real acc = 0;
      for (std::size_t b = 0; b < g; ++b) {
        acc += (forward ? q[a * g + b] : q[b * g + a]) * x[i * g + b];
      }
      v[a] = acc;
      u[a] = scale[i * g + a] * acc - y[i * g + a];
      dist += u[a] * u[a];
    }
    Real norm = std::sqrt(dist);
    if (norm == Real(0)) continue;
    Real* dq = drel.dq.data() + i * g * g;
    for (std::size_t a = 0; a < g; ++a) {
      const Real du = -upstream * u[a] / norm;
      dy[i * g + a] -= du;
      dscale[i * g + a] += du * v[a];
      const Real dv = du * scale[i * g + a];
      for (std::size_t b = 0; b < g; ++b) {
        if (forward) {
          dq[a * g + b] += dv * x[i * g + b];
          dx[i * g + b] += q[a * g + b] * dv;
        } else {
          dq[b * g + a] += dv * x[i * g + b];
          dx[i * g + b] += q[b * g + a] * dv;
        }
      }
    }
  }
}

// ---- model-level scoring ----------------------------------------------------

inline void require_kind(ModelKind actual, ModelKind expected) {
  if (actual != expected) {
    throw Error("model kind mismatch: model is " + std::string(kind_name(actual)) +
                ", scorer expects " + std::string(kind_name(expected)));
  }
}

template <class Real>
Real score_transe(const KgeModel<Real>& m, EntityId h, RelationId r, EntityId t) {
  require_kind(m.kind, ModelKind::kTransE);
  auto eh = entity_representation(m, h), et = entity_representation(m, t);
  return transe_score<Real>(eh, m.relation_row(r), et, m.gamma);
}

template <class Real>
Real score_complex(const KgeModel<Real>& m, EntityId h, RelationId r, EntityId t) {
  require_kind(m.kind, ModelKind::kComplEx);
  auto eh = entity_representation(m, h), et = entity_representation(m, t);
  return complex_score<Real>(eh, m.relation_row(r), et);
}

template <class Real>
Real score_note(const KgeModel<Real>& m, EntityId h, RelationId r, EntityId t,
                NoteDirection dir = NoteDirection::kHeadToTail) {
  require_kind(m.kind, ModelKind::kNote);
  NoteRelation<Real> rel(m.relation_row(r), m.dim, m.group_size);
  auto eh = entity_representation(m, h), et = entity_representation(m, t);
  return note_score<Real>(rel, eh, et, dir, m.gamma);
}

// Scores (h, r, t) for every t in `tails`, sharing the per-relation setup.
// NOTE uses the head-to-tail direction.
template <class Real>
std::vector<Real> score_tails(const KgeModel<Real>& m, EntityId h, RelationId r,
                              std::span<const EntityId> tails) {
  if (r >= m.num_relations) throw Error("relation id out of range");
  auto eh = entity_representation(m, h);
  std::optional<NoteRelation<Real>> rel;
  if (m.kind == ModelKind::kNote) rel.emplace(m.relation_row(r), m.dim, m.group_size);
  std::vector<Real> out;
  out.reserve(tails.size());
  for (auto t : tails) {
    auto et = entity_representation(m, t);
    switch (m.kind) {
      case ModelKind::kTransE:
        out.push_back(transe_score<Real>(eh, m.relation_row(r), et, m.gamma));
        break;
      case ModelKind::kComplEx:
        out.push_back(complex_score<Real>(eh, m.relation_row(r), et));
        break;
      case ModelKind::kNote:
        out.push_back(note_score<Real>(*rel, eh, et, NoteDirection::kHeadToTail, m.gamma));
        break;
    }
  }
  return out;
}

template <class Real>
Real score(const KgeModel<Real>& m, EntityId h, RelationId r, EntityId t) {
  EntityId one[1] = {t};
  return score_tails(m, h, r, std::span<const EntityId>(one, 1))[0];
}

// Rescores every candidate with the model and re-sorts. The retrieval score
// and source tag are carried over unchanged.
template <class Real>
CandidateList predict(const KgeModel<Real>& m, EntityId h, RelationId r,
                      const CandidateList& candidates) {
  auto tails = candidates.entities();
  auto scores = score_tails(m, h, r, std::span<const EntityId>(tails));
  CandidateList out = candidates;
  out.head = h;
  out.relation = r;
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    out.entries[i].score = static_cast<double>(scores[i]);
  }
  out.cap = std::max(out.cap, out.entries.size());
  sort_and_truncate(out);
  return out;
}

}  // namespace kgc::kge
