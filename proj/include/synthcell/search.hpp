#pragma once

// Greedy AutoAugment: level-wise beam search over sub-policy chains.
//
// Level 1 scores every single (op, p, m) sub-policy. Each following level
// extends the beam_k best chains of the previous level by every sub-policy
// and keeps the beam_k best extensions. All chains scored at any level are
// candidates; the top_b of them by score are returned.

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "synthcell/augment.hpp"
#include "synthcell/error.hpp"
#include "synthcell/instances.hpp"
#include "synthcell/parallel.hpp"
#include "synthcell/rng.hpp"
#include "synthcell/scorer.hpp"

namespace synthcell {

struct SearchSpaceSpec {
  int n_o = kOpCount;
  int n_p = 10;
  int n_m = 10;
  int f = 2;  // sub-policies per policy; the search's l_max

  void validate() const {
    if (n_o < 1 || n_o > kOpCount) fail(ErrorCode::InvalidParam, "n_o must be in [1, 11]");
    if (n_p < 1 || n_m < 1 || f < 1) fail(ErrorCode::InvalidParam, "n_p, n_m and f must be >= 1");
  }
};

/// (n_o·n_p·n_m)^f, exact.
inline boost::multiprecision::cpp_int search_space_size(const SearchSpaceSpec& spec) {
  spec.validate();
  const boost::multiprecision::cpp_int base = boost::multiprecision::cpp_int(spec.n_o) * spec.n_p * spec.n_m;
  return boost::multiprecision::pow(base, static_cast<unsigned>(spec.f));
}

struct GreedyConfig {
  int l_max = 2;
  int beam_k = 10;
  int top_b = 5;
  int eval_cells = 64;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const {
    if (l_max < 1 || beam_k < 1 || top_b < 1) fail(ErrorCode::InvalidParam, "l_max, beam_k and top_b must be >= 1");
    if (eval_cells < 1) fail(ErrorCode::InvalidParam, "eval_cells must be >= 1");
  }
};

struct ScoredChain {
  std::vector<SubPolicy> chain;
  double score = 0.0;
};

/// Score descending, then chain lexicographically by (op, p, m).
inline bool chain_order(const ScoredChain& a, const ScoredChain& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::lexicographical_compare(a.chain.begin(), a.chain.end(), b.chain.begin(), b.chain.end());
}

/// Mean score of the cells after the chain is applied with probability 1.
/// A cell whose transform degenerates contributes the lowest score observed
/// among the others.
inline double score_subpolicy_chain(std::span<const SubPolicy> chain, std::span<const CellObject> cells,
                                    const Scorer& scorer, const AugmentConfig& aug) {
  if (cells.empty()) fail(ErrorCode::NoCells, "no cells to score chain " + describe(chain));
  std::vector<double> scores;
  scores.reserve(cells.size());
  std::size_t degenerate = 0;
  for (const auto& cell : cells) {
    try {
      const CellObject t = apply_chain_forced(cell, chain, aug);
      const double s = scorer.score(t.patch);
      if (std::isnan(s)) fail(ErrorCode::NumericalFailure, "scorer returned NaN");
      scores.push_back(s);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DegenerateResult) {
        ++degenerate;
        continue;
      }
      throw Error(e.code(), std::string(e.what()) + " [chain " + describe(chain) + "]");
    }
  }
  if (scores.empty()) return std::numeric_limits<double>::lowest();
  double sum = 0.0;
  for (double s : scores) sum += s;
  const double floor = *std::min_element(scores.begin(), scores.end());
  sum += floor * static_cast<double>(degenerate);
  return sum / static_cast<double>(cells.size());
}

/// Every single sub-policy of the space, in (op, p, m) order.
inline std::vector<SubPolicy> enumerate_subpolicies(const SearchSpaceSpec& spec) {
  spec.validate();
  std::vector<SubPolicy> out;
  out.reserve(static_cast<std::size_t>(spec.n_o) * spec.n_p * spec.n_m);
  for (int op = 0; op < spec.n_o; ++op)
    for (int p = 1; p <= spec.n_p; ++p)
      for (int m = 1; m <= spec.n_m; ++m) out.push_back({static_cast<OpId>(op), p, m});
  return out;
}

/// Up to `count` pool objects chosen uniformly without replacement, kept in
/// pool order (SCOs first, then MCOs).
inline std::vector<CellObject> sample_cells(const ObjectPool& pool, int count, std::uint64_t seed) {
  std::vector<const CellObject*> all;
  for (const auto& c : pool.scos) all.push_back(&c);
  for (const auto& c : pool.mcos) all.push_back(&c);
  std::vector<std::size_t> idx(all.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (static_cast<std::size_t>(count) < idx.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
      const std::size_t j = i + rng.uniform_index(idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(count));
    std::sort(idx.begin(), idx.end());
  }
  std::vector<CellObject> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(*all[i]);
  return out;
}

inline std::vector<RasterImage> reference_crops(const ObjectPool& pool) {
  std::vector<RasterImage> crops;
  for (const auto& c : pool.scos) crops.push_back(c.patch);
  for (const auto& c : pool.mcos) crops.push_back(c.patch);
  return crops;
}

struct SearchResult {
  std::vector<Policy> policies;       // top_b, best first
  std::vector<ScoredChain> evaluated;  // every scored chain, in evaluation order
};

inline SearchResult greedy_autoaugment(const ObjectPool& pool, const SearchSpaceSpec& spec, const GreedyConfig& cfg,
                                       const Scorer& scorer, AugmentConfig aug = {}) {
  spec.validate();
  cfg.validate();
  if (pool.empty()) fail(ErrorCode::NoCells, "object pool is empty");
  aug.n_p = spec.n_p;
  aug.n_m = spec.n_m;
  const std::vector<CellObject> cells = sample_cells(pool, cfg.eval_cells, cfg.seed);
  const std::vector<SubPolicy> singles = enumerate_subpolicies(spec);

  SearchResult result;
  auto score_level = [&](std::vector<ScoredChain>& level) {
    parallel_for(level.size(), cfg.jobs, [&](std::size_t i) {
      level[i].score = score_subpolicy_chain(level[i].chain, cells, scorer, aug);
    });
    result.evaluated.insert(result.evaluated.end(), level.begin(), level.end());
  };
  auto keep_beam = [&](std::vector<ScoredChain> level) {
    std::sort(level.begin(), level.end(), chain_order);
    if (level.size() > static_cast<std::size_t>(cfg.beam_k)) level.resize(static_cast<std::size_t>(cfg.beam_k));
    return level;
  };

  std::vector<ScoredChain> level;
  for (const auto& sp : singles) level.push_back({{sp}, 0.0});
  score_level(level);
  std::vector<ScoredChain> beam = keep_beam(level);

  for (int l = 2; l <= cfg.l_max; ++l) {
    level.clear();
    for (const auto& parent : beam) {
      for (const auto& sp : singles) {
        ScoredChain ext{parent.chain, 0.0};
        ext.chain.push_back(sp);
        level.push_back(std::move(ext));
      }
    }
    score_level(level);
    beam = keep_beam(level);
  }

  std::vector<ScoredChain> ranked = result.evaluated;
  std::sort(ranked.begin(), ranked.end(), chain_order);
  const std::size_t b = std::min(ranked.size(), static_cast<std::size_t>(cfg.top_b));
  for (std::size_t i = 0; i < b; ++i) result.policies.push_back({ranked[i].chain, ranked[i].score});
  return result;
}

}  // namespace synthcell
