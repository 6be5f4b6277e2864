#include "nnsb/miloss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "neighbors.hpp"
#include "nnsb/error.hpp"

namespace nnsb {

void LatentBatch::validate() const {
  require(z.size() == s.size(), "LatentBatch: z and s differ in length");
  std::size_t pos = 0, neg = 0;
  for (int v : s) {
    require(v == 1 || v == -1, "LatentBatch: labels must be -1 or +1");
    (v == 1 ? pos : neg) += 1;
  }
  require(pos > 0 && neg > 0, "LatentBatch: both labels must be present");
  require(pos == neg, "LatentBatch: labels must be balanced");
}

void PhaseSchedule::validate() const {
  require(switch_threshold_sqdiff > 0.0, "PhaseSchedule: switch_threshold_sqdiff must be > 0");
  require(switch_threshold_sqratio > 0.0, "PhaseSchedule: switch_threshold_sqratio must be > 0");
  require(window > 0, "PhaseSchedule: window must be positive");
}

const char* to_string(LossPhase phase) {
  switch (phase) {
    case LossPhase::SqDiff: return "sq_diff";
    case LossPhase::SqRatio: return "sq_ratio";
    case LossPhase::LogRatio: return "log_ratio";
  }
  return "?";
}

namespace {

// Sorted view of a subset of batch indices.
struct SortedIndex {
  std::vector<double> values;
  std::vector<std::size_t> index;  // batch index at each sorted position
};

SortedIndex sort_subset(const Tensor& z, std::vector<std::size_t> members) {
  std::stable_sort(members.begin(), members.end(),
                   [&](std::size_t a, std::size_t b) { return z[a] < z[b]; });
  SortedIndex out;
  out.values.reserve(members.size());
  for (std::size_t i : members) out.values.push_back(z[i]);
  out.index = std::move(members);
  return out;
}

// Batch indices of the first k neighbors of the member at sorted position pos.
void member_neighbors(const SortedIndex& set, std::size_t pos, std::size_t k, std::vector<std::size_t>& out) {
  out.clear();
  const double z = set.values[pos];
  detail::walk_from(set.values, z, static_cast<std::ptrdiff_t>(pos) - 1, pos + 1,
                    [&](std::size_t p, double) {
                      out.push_back(set.index[p]);
                      return out.size() < k;
                    });
}

struct RadiusPlan {
  std::vector<std::size_t> query;
  std::vector<std::size_t> neighbor;
  std::vector<double> weight;
  std::vector<std::size_t> segment;
};

void add_window(RadiusPlan& plan, const SmoothingSpec& spec, std::size_t j, int M,
                std::span<const std::size_t> neighbors, std::size_t seg) {
  for (std::size_t k = 0; k < spec.window_offsets.size(); ++k) {
    const double w = spec.window_weights[k];
    if (w == 0.0) continue;
    const auto rank = static_cast<std::size_t>(M + spec.window_offsets[k]);
    plan.query.push_back(j);
    plan.neighbor.push_back(neighbors[rank - 1]);
    plan.weight.push_back(w);
    plan.segment.push_back(seg);
  }
}

// Smoothed radius per (query, m) segment, clamped at the floor.
Var radii(Var z, RadiusPlan plan, std::size_t segments, std::size_t& clamped) {
  Tape& tape = z.tape();
  Var a = gather_rows(z, std::move(plan.query));
  Var b = gather_rows(z, std::move(plan.neighbor));
  const std::size_t count = plan.weight.size();
  Var w = tape.constant(Tensor({count, 1}, std::move(plan.weight)));
  Var eps = segment_sum(mul(abs(sub(a, b)), w), std::move(plan.segment), segments);
  for (double v : eps.value().values()) clamped += v < kEpsFloor ? 1 : 0;
  return clamp_min(eps, kEpsFloor);
}

}  // namespace

BatchDensities batch_densities(Var z, std::span<const int> s, const SmoothingSpec& spec) {
  spec.validate();
  const Tensor& zv = z.value();
  require(zv.cols() == 1, "batch_densities: z must be n x 1");
  const std::size_t n = zv.rows();
  LatentBatch check{std::vector<double>(zv.values().begin(), zv.values().end()),
                    std::vector<int>(s.begin(), s.end())};
  check.validate();

  std::vector<std::size_t> all(n), pos_members, neg_members;
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) (s[i] == 1 ? pos_members : neg_members).push_back(i);
  const std::size_t nq = pos_members.size();

  const SortedIndex full = sort_subset(zv, all);
  const SortedIndex groups[2] = {sort_subset(zv, neg_members), sort_subset(zv, pos_members)};

  // Sorted position of each batch index in its own group and in the full set.
  std::vector<std::size_t> full_pos(n), group_pos(n);
  for (std::size_t p = 0; p < n; ++p) full_pos[full.index[p]] = p;
  for (const SortedIndex& g : groups)
    for (std::size_t p = 0; p < g.index.size(); ++p) group_pos[g.index[p]] = p;

  const std::size_t nm = spec.m_values.size();
  std::vector<int> scaled(nm);
  int top_q = spec.max_rank(), top_p = 0;
  for (std::size_t mi = 0; mi < nm; ++mi) {
    scaled[mi] = scaled_rank(spec.m_values[mi], n, nq);
    top_p = std::max(top_p, scaled[mi] + spec.max_offset_used());
  }
  require(static_cast<std::size_t>(top_q) <= nq - 1,
          "batch_densities: neighbor window exceeds the same-label subset");
  require(static_cast<std::size_t>(top_p) <= n - 1, "batch_densities: neighbor window exceeds the batch");

  RadiusPlan qplan, pplan;
  std::vector<std::size_t> nb;
  for (std::size_t j = 0; j < n; ++j) {
    const SortedIndex& g = groups[s[j] == 1 ? 1 : 0];
    member_neighbors(g, group_pos[j], static_cast<std::size_t>(top_q), nb);
    for (std::size_t mi = 0; mi < nm; ++mi) add_window(qplan, spec, j, spec.m_values[mi], nb, j * nm + mi);
    member_neighbors(full, full_pos[j], static_cast<std::size_t>(top_p), nb);
    for (std::size_t mi = 0; mi < nm; ++mi) add_window(pplan, spec, j, scaled[mi], nb, j * nm + mi);
  }

  BatchDensities out;
  Var eps_q = radii(z, std::move(qplan), n * nm, out.clamped);
  Var eps_p = radii(z, std::move(pplan), n * nm, out.clamped);

  // Both estimates carry the probability mass m / N_q (the marginal one at the
  // scaled rank), divided by the unit-ball length and averaged over m.
  Tensor mass({n * nm, 1});
  std::vector<std::size_t> owner(n * nm);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t mi = 0; mi < nm; ++mi) {
      mass[j * nm + mi] = static_cast<double>(spec.m_values[mi]) / static_cast<double>(nq) / kUnitBall1d /
                          static_cast<double>(nm);
      owner[j * nm + mi] = j;
    }
  }
  Tape& tape = z.tape();
  Var mass_var = tape.constant(std::move(mass));
  out.conditional = segment_sum(div(mass_var, eps_q), owner, n);
  out.marginal = segment_sum(div(mass_var, eps_p), std::move(owner), n);
  return out;
}

Var loss_sq_diff(Var z, std::span<const int> s, const SmoothingSpec& spec, std::size_t* clamped) {
  BatchDensities d = batch_densities(z, s, spec);
  if (clamped) *clamped = d.clamped;
  return mean(square(sub(d.conditional, d.marginal)));
}

Var loss_sq_ratio(Var z, std::span<const int> s, const SmoothingSpec& spec, std::size_t* clamped) {
  BatchDensities d = batch_densities(z, s, spec);
  if (clamped) *clamped = d.clamped;
  return mean(square(add_scalar(scale(div(d.conditional, d.marginal), -1.0), 1.0)));
}

double loss_sq_diff(const LatentBatch& batch, const SmoothingSpec& spec) {
  Tape tape;
  Var z = tape.constant(Tensor::column(batch.z));
  return loss_sq_diff(z, batch.s, spec).item();
}

double loss_sq_ratio(const LatentBatch& batch, const SmoothingSpec& spec) {
  Tape tape;
  Var z = tape.constant(Tensor::column(batch.z));
  return loss_sq_ratio(z, batch.s, spec).item();
}

Var phase_loss(LossPhase phase, Var z, std::span<const int> s, const SmoothingSpec& spec, std::size_t* clamped) {
  switch (phase) {
    case LossPhase::SqDiff: return loss_sq_diff(z, s, spec, clamped);
    case LossPhase::SqRatio: return loss_sq_ratio(z, s, spec, clamped);
    case LossPhase::LogRatio: break;
  }
  throw ContractViolation("the log-ratio phase is evaluation-only");
}

Estimate mi_estimate(const LatentBatch& batch, const SmoothingSpec& spec) {
  batch.validate();
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < batch.z.size(); ++i) (batch.s[i] == 1 ? pos : neg).push_back(batch.z[i]);
  const SampleSet full(batch.z);
  const SampleSet groups[2] = {SampleSet(std::move(neg)), SampleSet(std::move(pos))};
  Estimate out;
  for (std::size_t i = 0; i < batch.z.size(); ++i) {
    const Estimate r = density_ratio(batch.z[i], full, groups[batch.s[i] == 1 ? 1 : 0], spec, true, true);
    out.value += std::log(r.value);
    out.clamped += r.clamped;
  }
  out.value /= static_cast<double>(batch.z.size());
  return out;
}

Estimate kl_estimate(std::span<const double> p_samples, std::span<const double> q_samples,
                     const SmoothingSpec& spec) {
  const SampleSet p(std::vector<double>(p_samples.begin(), p_samples.end()));
  const SampleSet q(std::vector<double>(q_samples.begin(), q_samples.end()));
  Estimate out;
  for (double z : p_samples) {
    // z is a member of P: its own distance is excluded there, not in Q.
    const Estimate r = density_ratio(z, q, p, spec, false, true);
    out.value += std::log(r.value);
    out.clamped += r.clamped;
  }
  out.value /= static_cast<double>(p_samples.size());
  return out;
}

double mi_upper_bound(std::span<const LatentBatch> dims, const SmoothingSpec& spec) {
  double total = 0.0;
  for (const LatentBatch& b : dims) {
    require(b.s == dims.front().s, "mi_upper_bound: dimensions must share the label vector");
    total += mi_estimate(b, spec).value;
  }
  return total;
}

LossPhase select_phase(std::span<const double> history, LossPhase current, const PhaseSchedule& schedule) {
  require(!history.empty(), "select_phase: empty loss history");
  if (current != LossPhase::SqDiff) return current;
  const std::size_t w = std::min(schedule.window, history.size());
  const auto tail = history.last(w);
  const double trailing = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(w);
  return trailing < schedule.switch_threshold_sqdiff ? LossPhase::SqRatio : LossPhase::SqDiff;
}

}  // namespace nnsb
