#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "scenemesh/common.hpp"
#include "scenemesh/corpus.hpp"
#include "scenemesh/rng.hpp"

namespace scenemesh {

// First derivative of log Gamma. Shift-up recurrence into the asymptotic
// region, then the standard Bernoulli series.
inline double digamma(double x) {
  if (!(x > 0.0)) throw DomainError("digamma: argument must be positive");
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return result;
}

struct LdaConfig {
  int max_em_iters = 100;
  int e_step_iters = 20;      // inner E-step cap per document
  double tol = 1e-4;          // relative ELBO change stopping rule
  double e_step_tol = 1e-3;   // max |delta gamma| inner stopping rule
  double eta = 0.01;          // M-step pseudocount smoothing per (word, topic)
  int restarts = 3;           // random-init restarts; the best bound wins
  std::uint64_t seed = 0;
};

struct DirichletPrior {
  std::vector<double> alpha;

  double total() const {
    double s = 0.0;
    for (double a : alpha) s += a;
    return s;
  }

  void validate() const {
    if (alpha.empty()) throw DomainError("DirichletPrior: empty alpha");
    for (double a : alpha) {
      if (!(a > 0.0)) throw DomainError("DirichletPrior: alpha entries must be positive");
    }
  }
};

// Per-scene activities: K rows, each a distribution over the codebook.
struct TopicMatrix {
  GridSpec grid;
  std::vector<std::vector<double>> topics;

  int num_topics() const { return static_cast<int>(topics.size()); }

  void validate() const {
    grid.validate();
    for (const auto& row : topics) {
      if (row.size() != static_cast<std::size_t>(grid.vocab_size())) {
        throw DomainError("TopicMatrix: topic length does not match vocab size");
      }
      double sum = 0.0;
      for (double v : row) {
        if (!(v >= 0.0)) throw DomainError("TopicMatrix: negative or non-finite entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw DomainError("TopicMatrix: topic row does not sum to 1");
      }
    }
  }
};

// Variational Dirichlet profile of one clip over the topic set.
struct ClipTopicProfile {
  std::string clip_id;
  std::string scene_id;
  std::vector<double> gamma;
};

struct LdaFit {
  TopicMatrix topics;
  DirichletPrior prior;
  std::vector<ClipTopicProfile> profiles;
  std::vector<double> elbo_trace;
};

namespace detail {

// One document's variational E-step on fixed topics, iterating over unique
// words weighted by counts. phi is row-major (unique word, topic), initialized
// to 1/K. Ends with gamma consistent with the returned phi.
inline void e_step_document(const ClipDocument& doc, const std::vector<std::vector<double>>& beta,
                            const std::vector<double>& alpha, int max_iters, double gamma_tol,
                            std::vector<double>& phi, std::vector<double>& gamma) {
  const int k_topics = static_cast<int>(alpha.size());
  const std::size_t n_unique = doc.counts.size();
  phi.assign(n_unique * static_cast<std::size_t>(k_topics), 1.0 / k_topics);
  gamma = alpha;
  std::vector<double> prev_gamma;
  std::vector<double> exp_digamma(static_cast<std::size_t>(k_topics));

  for (int iter = 0; iter < max_iters; ++iter) {
    prev_gamma = gamma;
    for (int k = 0; k < k_topics; ++k) gamma[static_cast<std::size_t>(k)] = alpha[static_cast<std::size_t>(k)];
    for (std::size_t w = 0; w < n_unique; ++w) {
      const double count = doc.counts[w].second;
      const double* phi_row = &phi[w * static_cast<std::size_t>(k_topics)];
      for (int k = 0; k < k_topics; ++k) {
        gamma[static_cast<std::size_t>(k)] += count * phi_row[k];
      }
    }
    if (iter > 0) {
      double delta = 0.0;
      for (int k = 0; k < k_topics; ++k) {
        delta = std::max(delta, std::abs(gamma[static_cast<std::size_t>(k)] -
                                         prev_gamma[static_cast<std::size_t>(k)]));
      }
      if (delta < gamma_tol) return;  // gamma already consistent with phi
    }
    for (int k = 0; k < k_topics; ++k) {
      exp_digamma[static_cast<std::size_t>(k)] = std::exp(digamma(gamma[static_cast<std::size_t>(k)]));
    }
    for (std::size_t w = 0; w < n_unique; ++w) {
      const int word = doc.counts[w].first;
      double* phi_row = &phi[w * static_cast<std::size_t>(k_topics)];
      double norm = 0.0;
      for (int k = 0; k < k_topics; ++k) {
        const double b = std::max(beta[static_cast<std::size_t>(k)][static_cast<std::size_t>(word)], 1e-12);
        phi_row[k] = b * exp_digamma[static_cast<std::size_t>(k)];
        norm += phi_row[k];
      }
      if (norm > 0.0) {
        for (int k = 0; k < k_topics; ++k) phi_row[k] /= norm;
      } else {
        for (int k = 0; k < k_topics; ++k) phi_row[k] = 1.0 / k_topics;
      }
    }
  }
  // Iteration cap reached with phi newer than gamma: refresh gamma once more.
  for (int k = 0; k < k_topics; ++k) gamma[static_cast<std::size_t>(k)] = alpha[static_cast<std::size_t>(k)];
  for (std::size_t w = 0; w < n_unique; ++w) {
    const double count = doc.counts[w].second;
    const double* phi_row = &phi[w * static_cast<std::size_t>(k_topics)];
    for (int k = 0; k < k_topics; ++k) gamma[static_cast<std::size_t>(k)] += count * phi_row[k];
  }
}

// Variational bound contribution of one document given consistent (phi, gamma)
// and fixed topics (log-space). Accumulated with compensated summation.
inline double document_bound(const ClipDocument& doc, const std::vector<std::vector<double>>& log_beta,
                             const std::vector<double>& alpha, const std::vector<double>& phi,
                             const std::vector<double>& gamma) {
  const int k_topics = static_cast<int>(alpha.size());
  KahanSum bound;
  double gamma_total = 0.0;
  double alpha_total = 0.0;
  for (int k = 0; k < k_topics; ++k) {
    gamma_total += gamma[static_cast<std::size_t>(k)];
    alpha_total += alpha[static_cast<std::size_t>(k)];
  }
  const double dg_total = digamma(gamma_total);
  std::vector<double> e_log_theta(static_cast<std::size_t>(k_topics));
  for (int k = 0; k < k_topics; ++k) {
    e_log_theta[static_cast<std::size_t>(k)] = digamma(gamma[static_cast<std::size_t>(k)]) - dg_total;
  }

  bound.add(std::lgamma(alpha_total) - std::lgamma(gamma_total));
  for (int k = 0; k < k_topics; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    bound.add(-std::lgamma(alpha[ks]) + std::lgamma(gamma[ks]));
    bound.add((alpha[ks] - gamma[ks]) * e_log_theta[ks]);
  }
  for (std::size_t w = 0; w < doc.counts.size(); ++w) {
    const int word = doc.counts[w].first;
    const double count = doc.counts[w].second;
    const double* phi_row = &phi[w * static_cast<std::size_t>(k_topics)];
    for (int k = 0; k < k_topics; ++k) {
      const double p = phi_row[k];
      if (p <= 0.0) continue;
      const auto ks = static_cast<std::size_t>(k);
      bound.add(count * p *
                (e_log_theta[ks] + log_beta[ks][static_cast<std::size_t>(word)] - std::log(p)));
    }
  }
  return bound.value();
}

inline std::vector<std::vector<double>> log_topics(const std::vector<std::vector<double>>& beta) {
  std::vector<std::vector<double>> out(beta.size());
  for (std::size_t k = 0; k < beta.size(); ++k) {
    out[k].resize(beta[k].size());
    for (std::size_t v = 0; v < beta[k].size(); ++v) {
      out[k][v] = std::log(std::max(beta[k][v], 1e-300));
    }
  }
  return out;
}

}  // namespace detail

namespace detail {

// One variational EM run. alpha is initialized to 1 and held fixed; beta rows
// are drawn from a symmetric Dirichlet(1) using the config seed; phi starts
// uniform. The traced objective is the variational bound plus the
// eta-pseudocount topic smoothing term, so it is non-decreasing across EM
// iterations by construction. Profiles are re-inferred against the final
// topics before returning.
inline LdaFit fit_lda_single(const std::vector<ClipDocument>& corpus, const GridSpec& grid,
                             int k_topics, const LdaConfig& cfg) {
  grid.validate();
  if (k_topics < 1) throw DomainError("fit_lda: K must be >= 1");
  if (corpus.empty()) throw DomainError("fit_lda: empty corpus");
  bool any_words = false;
  for (const auto& doc : corpus) {
    doc.validate(grid);
    if (doc.total_count() > 0) any_words = true;
  }
  if (!any_words) throw DomainError("fit_lda: corpus has no words");

  const int n_vocab = grid.vocab_size();
  const auto kn = static_cast<std::size_t>(k_topics);
  const auto vn = static_cast<std::size_t>(n_vocab);

  LdaFit fit;
  fit.prior.alpha.assign(kn, 1.0);
  fit.topics.grid = grid;
  fit.topics.topics.assign(kn, std::vector<double>(vn, 0.0));

  Rng rng(cfg.seed);
  for (std::size_t k = 0; k < kn; ++k) {
    double total = 0.0;
    auto& row = fit.topics.topics[k];
    for (std::size_t v = 0; v < vn; ++v) {
      row[v] = std::max(rng.exponential(), 1e-300);
      total += row[v];
    }
    for (std::size_t v = 0; v < vn; ++v) row[v] /= total;
  }

  std::vector<std::vector<double>> phis(corpus.size());
  std::vector<std::vector<double>> gammas(corpus.size());
  std::vector<std::vector<double>> accum(kn, std::vector<double>(vn, 0.0));

  double prev_bound = 0.0;
  for (int iter = 0; iter < cfg.max_em_iters; ++iter) {
    for (auto& row : accum) std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      detail::e_step_document(corpus[j], fit.topics.topics, fit.prior.alpha, cfg.e_step_iters,
                              cfg.e_step_tol, phis[j], gammas[j]);
      const auto& doc = corpus[j];
      for (std::size_t w = 0; w < doc.counts.size(); ++w) {
        const auto word = static_cast<std::size_t>(doc.counts[w].first);
        const double count = doc.counts[w].second;
        const double* phi_row = &phis[j][w * kn];
        for (std::size_t k = 0; k < kn; ++k) accum[k][word] += count * phi_row[k];
      }
    }
    for (std::size_t k = 0; k < kn; ++k) {
      double total = 0.0;
      for (std::size_t v = 0; v < vn; ++v) {
        accum[k][v] += cfg.eta;
        total += accum[k][v];
      }
      for (std::size_t v = 0; v < vn; ++v) fit.topics.topics[k][v] = accum[k][v] / total;
    }

    const auto log_beta = detail::log_topics(fit.topics.topics);
    KahanSum bound;
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      bound.add(detail::document_bound(corpus[j], log_beta, fit.prior.alpha, phis[j], gammas[j]));
    }
    for (std::size_t k = 0; k < kn; ++k) {
      for (std::size_t v = 0; v < vn; ++v) bound.add(cfg.eta * log_beta[k][v]);
    }
    const double elbo = bound.value();
    if (!std::isfinite(elbo)) throw NumericError("fit_lda: non-finite ELBO");
    fit.elbo_trace.push_back(elbo);
    if (iter > 0) {
      const double rel = std::abs(elbo - prev_bound) / std::max(std::abs(prev_bound), 1e-12);
      if (rel < cfg.tol) break;
    }
    prev_bound = elbo;
  }

  // Final E-step so the returned profiles correspond to the returned topics.
  fit.profiles.resize(corpus.size());
  std::vector<double> phi;
  for (std::size_t j = 0; j < corpus.size(); ++j) {
    ClipTopicProfile profile;
    profile.clip_id = corpus[j].clip_id;
    profile.scene_id = corpus[j].scene_id;
    detail::e_step_document(corpus[j], fit.topics.topics, fit.prior.alpha, cfg.e_step_iters,
                            cfg.e_step_tol, phi, profile.gamma);
    fit.profiles[j] = std::move(profile);
  }
  return fit;
}

}  // namespace detail

// Per-scene LDA with seeded random restarts; the run with the best final
// bound is kept.
inline LdaFit fit_lda(const std::vector<ClipDocument>& corpus, const GridSpec& grid, int k_topics,
                      const LdaConfig& cfg) {
  const int restarts = std::max(1, cfg.restarts);
  LdaFit best;
  double best_bound = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    LdaConfig run_cfg = cfg;
    run_cfg.seed = restarts == 1 ? cfg.seed : derive_seed(cfg.seed, "restart:" + std::to_string(r));
    LdaFit fit = detail::fit_lda_single(corpus, grid, k_topics, run_cfg);
    if (fit.elbo_trace.back() > best_bound) {
      best_bound = fit.elbo_trace.back();
      best = std::move(fit);
    }
  }
  return best;
}

// E-step-only profiling against a fixed topic set (the re-profiling step used
// for shared-basis representations).
inline std::vector<ClipTopicProfile> infer_profiles_fixed_topics(
    const std::vector<ClipDocument>& clips, const TopicMatrix& topics, const DirichletPrior& prior,
    const LdaConfig& cfg) {
  prior.validate();
  if (prior.alpha.size() != topics.topics.size()) {
    throw DomainError("infer_profiles_fixed_topics: alpha length does not match topic count");
  }
  std::vector<ClipTopicProfile> out(clips.size());
  std::vector<double> phi;
  for (std::size_t j = 0; j < clips.size(); ++j) {
    clips[j].validate(topics.grid);
    ClipTopicProfile profile;
    profile.clip_id = clips[j].clip_id;
    profile.scene_id = clips[j].scene_id;
    detail::e_step_document(clips[j], topics.topics, prior.alpha, cfg.e_step_iters, cfg.e_step_tol,
                            phi, profile.gamma);
    out[j] = std::move(profile);
  }
  return out;
}

// Variational bound of a clip set under fixed topics; the marginal-likelihood
// surrogate used by the rotation search.
inline double fixed_topics_elbo(const std::vector<ClipDocument>& clips, const TopicMatrix& topics,
                                const DirichletPrior& prior, const LdaConfig& cfg) {
  prior.validate();
  const auto log_beta = detail::log_topics(topics.topics);
  KahanSum bound;
  std::vector<double> phi;
  std::vector<double> gamma;
  for (const auto& clip : clips) {
    clip.validate(topics.grid);
    detail::e_step_document(clip, topics.topics, prior.alpha, cfg.e_step_iters, cfg.e_step_tol,
                            phi, gamma);
    bound.add(detail::document_bound(clip, log_beta, prior.alpha, phi, gamma));
  }
  return bound.value();
}

}  // namespace scenemesh
