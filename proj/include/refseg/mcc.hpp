#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "refseg/autodiff.hpp"
#include "refseg/data.hpp"

// Meaning consistency: sentence pooling over vision-aware word features and a
// triplet contrastive loss that pulls same-object expressions together.

namespace refseg {

/// Sentence-level feature: mean over the word dimension.
template <typename S>
Var<S> sentence_feature(Var<S> f_w4) {
  return mean_rows(f_w4);
}

/// Closed form of the triplet loss given the three pairwise cosines:
/// -c(p1,p2) + log(exp(c(p1,n)) + exp(c(p2,n))).
inline double mcc_loss_from_cosines(double c12, double c1n, double c2n) {
  const double m = std::max(c1n, c2n);
  return -c12 + m + std::log(std::exp(c1n - m) + std::exp(c2n - m));
}

/// Triplet contrastive loss on sentence features (1 x C rows). Cosines are
/// used inside the exponentials; evaluated with a stable log-sum-exp.
/// `temperature` divides the cosines and defaults to the plain formula.
template <typename S>
Var<S> mcc_loss(Var<S> s_p1, Var<S> s_p2, Var<S> s_n, double temperature = 1.0) {
  if (temperature <= 0) throw ArgumentError("mcc_loss: temperature must be positive");
  Var<S> c12 = cosine(s_p1, s_p2);
  Var<S> c1n = cosine(s_p1, s_n);
  Var<S> c2n = cosine(s_p2, s_n);
  if (temperature != 1.0) {
    c12 = scale(c12, 1.0 / temperature);
    c1n = scale(c1n, 1.0 / temperature);
    c2n = scale(c2n, 1.0 / temperature);
  }
  return sub(logsumexp2(c1n, c2n), c12);
}

/// One sampled triplet: two expressions of the same object and one expression
/// of a different object (same scene preferred, same batch otherwise).
struct TripletRef {
  int scene = -1;  // batch position of the positive scene
  int pos_instance = -1;
  int p1_expr = -1;
  int p2_expr = -1;
  int neg_scene = -1;  // batch position of the negative's scene
  int neg_instance = -1;
  int neg_expr = -1;
};

struct TripletSample {
  std::vector<TripletRef> triplets;
  int skipped = 0;  // scenes with no valid negative in the batch
};

/// One triplet per scene when possible. Deterministic given the rng state;
/// never used at inference time.
inline TripletSample sample_triplets(const std::vector<const Scene*>& batch, std::mt19937_64& rng) {
  auto randint = [&rng](int n) { return static_cast<int>(rng() % static_cast<uint64_t>(n)); };
  TripletSample out;
  for (int si = 0; si < static_cast<int>(batch.size()); ++si) {
    const Scene& scene = *batch[si];
    // candidate positive instances need two expressions
    std::vector<int> positives;
    for (int i = 0; i < static_cast<int>(scene.instances.size()); ++i)
      if (scene.instances[i].expressions.size() >= 2) positives.push_back(i);
    if (positives.empty()) {
      ++out.skipped;
      continue;
    }
    TripletRef t;
    t.scene = si;
    t.pos_instance = positives[randint(static_cast<int>(positives.size()))];
    const auto& exprs = scene.instances[t.pos_instance].expressions;
    t.p1_expr = randint(static_cast<int>(exprs.size()));
    t.p2_expr = randint(static_cast<int>(exprs.size()) - 1);
    if (t.p2_expr >= t.p1_expr) ++t.p2_expr;

    if (scene.instances.size() >= 2) {
      int other = randint(static_cast<int>(scene.instances.size()) - 1);
      if (other >= t.pos_instance) ++other;
      t.neg_scene = si;
      t.neg_instance = other;
      t.neg_expr = randint(static_cast<int>(scene.instances[other].expressions.size()));
    } else {
      // fall back to an expression from another scene in the batch
      std::vector<int> others;
      for (int sj = 0; sj < static_cast<int>(batch.size()); ++sj)
        if (sj != si && !batch[sj]->instances.empty()) others.push_back(sj);
      if (others.empty()) {
        ++out.skipped;
        continue;
      }
      t.neg_scene = others[randint(static_cast<int>(others.size()))];
      const Scene& ns = *batch[t.neg_scene];
      t.neg_instance = randint(static_cast<int>(ns.instances.size()));
      t.neg_expr = randint(static_cast<int>(ns.instances[t.neg_instance].expressions.size()));
    }
    out.triplets.push_back(t);
  }
  return out;
}

}  // namespace refseg
