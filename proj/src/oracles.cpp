// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/oracles.hpp"

#include <cmath>

#include "tempocoh/error.hpp"

namespace tempocoh::oracle {

Tensor affinity_full(const Tensor& features) {
  int64_t t_len = features.dim(0), d_len = features.dim(1);
  Tensor d(Shape{t_len, t_len});
  for (int64_t i = 0; i < t_len; ++i) {
    for (int64_t j = 0; j < t_len; ++j) {
      double ss = 0.0;
      for (int64_t k = 0; k < d_len; ++k) {
        double r = features.at(i, k) - features.at(j, k);
        ss += r * r;
      }
      d.at(i, j) = std::exp(-std::sqrt(ss));
    }
  }
  return d;
}

namespace {

Tensor assignment_probs(const Tensor& q, const Tensor& d_full, const Tensor* z, int64_t radius) {
  int64_t t_len = q.dim(0), k_len = q.dim(1);
  Tensor out(Shape{t_len, k_len});
  for (int64_t i = 0; i < t_len; ++i) {
    std::vector<double> numer(static_cast<size_t>(k_len));
    double denom = 0.0;
    for (int64_t k = 0; k < k_len; ++k) {
      double product = std::exp(q.at(i, k));
      for (int64_t j = i - radius; j <= i + radius; ++j) {
        if (j < 0 || j >= t_len || j == i) continue;
        double wij = d_full.at(i, j);
        if (z != nullptr) wij *= z->at(i, j);
        product *= std::exp(q.at(j, k) * wij);
      }
      numer[static_cast<size_t>(k)] = product;
      denom += product;
    }
    for (int64_t k = 0; k < k_len; ++k) out.at(i, k) = numer[static_cast<size_t>(k)] / denom;
  }
  return out;
}

}  // namespace

Tensor tc_assignment(const Tensor& q, const Tensor& d_full, int64_t radius) {
  return assignment_probs(q, d_full, nullptr, radius);
}

Tensor tc_assignment_gated(const Tensor& q, const Tensor& d_full, const Tensor& z, int64_t radius) {
  return assignment_probs(q, d_full, &z, radius);
}

Tensor tc_attention(const Tensor& e, const Tensor& h, int64_t radius) {
  int64_t t_len = e.dim(0);
  Tensor dprime = affinity_full(h);
  Tensor out(Shape{t_len});
  double denom = 0.0;
  for (int64_t i = 0; i < t_len; ++i) {
    double product = std::exp(e.at(i));
    for (int64_t j = i - radius; j <= i + radius; ++j) {
      if (j < 0 || j >= t_len || j == i) continue;
      product *= std::exp(e.at(j) * dprime.at(i, j));
    }
    out.at(i) = product;
    denom += product;
  }
  for (int64_t i = 0; i < t_len; ++i) out.at(i) /= denom;
  return out;
}

Tensor conv1d_same(const Tensor& seq, const Tensor& kernel) {
  int64_t t_len = seq.dim(0), d_len = seq.dim(1), width = kernel.dim(0);
  int64_t half = (width - 1) / 2;
  Tensor out(Shape{t_len, d_len});
  for (int64_t t = 0; t < t_len; ++t) {
    for (int64_t d = 0; d < d_len; ++d) {
      double s = 0.0;
      for (int64_t o = -half; o <= half; ++o) {
        int64_t src = t + o;
        if (src < 0 || src >= t_len) continue;
        s += kernel.at(o + half) * seq.at(src, d);
      }
      out.at(t, d) = s;
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out(Shape{a.dim(0), b.dim(1)});
  for (int64_t i = 0; i < a.dim(0); ++i)
    for (int64_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (int64_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

Tensor netvlad_scores(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& c,
                      const Tensor& cls_w, const Tensor& cls_b) {
  int64_t t_len = x.dim(0), d_len = x.dim(1), clusters = w.dim(0), k_len = cls_w.dim(0);

  // Row softmax of x w^T + b with max subtraction.
  Tensor alpha(Shape{t_len, clusters});
  for (int64_t i = 0; i < t_len; ++i) {
    std::vector<double> logits(static_cast<size_t>(clusters));
    double hi = -1e300;
    for (int64_t k = 0; k < clusters; ++k) {
      double q = b.at(k);
      for (int64_t d = 0; d < d_len; ++d) q += x.at(i, d) * w.at(k, d);
      logits[static_cast<size_t>(k)] = q;
      if (q > hi) hi = q;
    }
    double denom = 0.0;
    for (int64_t k = 0; k < clusters; ++k) denom += std::exp(logits[static_cast<size_t>(k)] - hi);
    for (int64_t k = 0; k < clusters; ++k) alpha.at(i, k) = std::exp(logits[static_cast<size_t>(k)] - hi) / denom;
  }

  Tensor vlad(Shape{clusters, d_len});
  for (int64_t k = 0; k < clusters; ++k)
    for (int64_t d = 0; d < d_len; ++d) {
      double s = 0.0;
      for (int64_t i = 0; i < t_len; ++i) s += alpha.at(i, k) * (x.at(i, d) - c.at(k, d));
      vlad.at(k, d) = s;
    }

  for (int64_t k = 0; k < clusters; ++k) {
    double ss = 0.0;
    for (int64_t d = 0; d < d_len; ++d) ss += vlad.at(k, d) * vlad.at(k, d);
    double inv = 1.0 / std::sqrt(ss + 1e-24);
    for (int64_t d = 0; d < d_len; ++d) vlad.at(k, d) *= inv;
  }
  double ss_all = 0.0;
  for (int64_t k = 0; k < clusters; ++k)
    for (int64_t d = 0; d < d_len; ++d) ss_all += vlad.at(k, d) * vlad.at(k, d);
  double inv_all = 1.0 / std::sqrt(ss_all + 1e-24);

  Tensor scores(Shape{k_len});
  for (int64_t label = 0; label < k_len; ++label) {
    double s = cls_b.at(label);
    for (int64_t k = 0; k < clusters; ++k)
      for (int64_t d = 0; d < d_len; ++d)
        s += cls_w.at(label, k * d_len + d) * vlad.at(k, d) * inv_all;
    scores.at(label) = 1.0 / (1.0 + std::exp(-s));
  }
  return scores;
}

// ---- metric twins ----------------------------------------------------------

namespace {

struct RankedEntry {
  double score;
  bool correct;
  int64_t record;
  int64_t label;
};

// a ranks before b under (score desc, video_id asc, label asc).
bool ranks_before(const std::vector<EvalRecord>& records, const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  const std::string& va = records[static_cast<size_t>(a.record)].video_id;
  const std::string& vb = records[static_cast<size_t>(b.record)].video_id;
  if (va != vb) return va < vb;
  return a.label < b.label;
}

// Selection sort: repeatedly extract the best-ranked remaining entry.
void selection_rank(const std::vector<EvalRecord>& records, std::vector<RankedEntry>& entries) {
  for (size_t i = 0; i < entries.size(); ++i) {
    size_t best = i;
    for (size_t j = i + 1; j < entries.size(); ++j) {
      if (ranks_before(records, entries[j], entries[best])) best = j;
    }
    std::swap(entries[i], entries[best]);
  }
}

// Top-cap label ids of one record by repeated max extraction.
std::vector<int64_t> extract_top(const EvalRecord& rec, int64_t cap) {
  int64_t k_len = rec.scores.dim(0);
  std::vector<bool> taken(static_cast<size_t>(k_len), false);
  std::vector<int64_t> out;
  for (int64_t round = 0; round < cap && round < k_len; ++round) {
    int64_t best = -1;
    for (int64_t k = 0; k < k_len; ++k) {
      if (taken[static_cast<size_t>(k)]) continue;
      if (best == -1 || rec.scores.at(k) > rec.scores.at(best)) best = k;
    }
    taken[static_cast<size_t>(best)] = true;
    out.push_back(best);
  }
  return out;
}

// Area under the precision-recall steps of a ranked list.
double curve_ap(const std::vector<RankedEntry>& ranked, int64_t total_positives) {
  if (total_positives <= 0) return 0.0;
  double area = 0.0;
  double prev_recall = 0.0;
  int64_t hits = 0;
  for (size_t i = 0; i < ranked.size(); ++i) {
    if (!ranked[i].correct) continue;
    ++hits;
    double recall = static_cast<double>(hits) / static_cast<double>(total_positives);
    double precision = static_cast<double>(hits) / static_cast<double>(i + 1);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

}  // namespace

double gap(const std::vector<EvalRecord>& records, int64_t top_n) {
  std::vector<RankedEntry> pool;
  int64_t denom = 0;
  for (size_t r = 0; r < records.size(); ++r) {
    const EvalRecord& rec = records[r];
    int64_t truths = 0;
    for (int64_t k = 0; k < rec.truth.size(); ++k) truths += rec.truth.test(k) ? 1 : 0;
    denom += truths < top_n ? truths : top_n;
    for (int64_t id : extract_top(rec, top_n)) {
      pool.push_back({rec.scores.at(id), rec.truth.test(id), static_cast<int64_t>(r), id});
    }
  }
  selection_rank(records, pool);
  return curve_ap(pool, denom);
}

double map(const std::vector<EvalRecord>& records) {
  int64_t k_len = records[0].scores.dim(0);
  double sum = 0.0;
  int64_t classes = 0;
  for (int64_t k = 0; k < k_len; ++k) {
    std::vector<RankedEntry> entries;
    int64_t positives = 0;
    for (size_t r = 0; r < records.size(); ++r) {
      bool correct = records[r].truth.test(k);
      positives += correct ? 1 : 0;
      entries.push_back({records[r].scores.at(k), correct, static_cast<int64_t>(r), k});
    }
    if (positives == 0) continue;
    selection_rank(records, entries);
    sum += curve_ap(entries, positives);
    ++classes;
  }
  if (classes == 0) throw ContractError("map oracle needs a positive class");
  return sum / static_cast<double>(classes);
}

double perr(const std::vector<EvalRecord>& records) {
  double sum = 0.0;
  int64_t used = 0;
  for (const auto& rec : records) {
    int64_t truths = 0;
    for (int64_t k = 0; k < rec.truth.size(); ++k) truths += rec.truth.test(k) ? 1 : 0;
    if (truths == 0) continue;
    int64_t correct = 0;
    for (int64_t id : extract_top(rec, truths)) correct += rec.truth.test(id) ? 1 : 0;
    sum += static_cast<double>(correct) / static_cast<double>(truths);
    ++used;
  }
  return used > 0 ? sum / static_cast<double>(used) : 0.0;
}

double hit1(const std::vector<EvalRecord>& records) {
  int64_t hits = 0, used = 0;
  for (const auto& rec : records) {
    int64_t truths = 0;
    for (int64_t k = 0; k < rec.truth.size(); ++k) truths += rec.truth.test(k) ? 1 : 0;
    if (truths == 0) continue;
    int64_t best = 0;
    for (int64_t k = 1; k < rec.scores.dim(0); ++k) {
      if (rec.scores.at(k) > rec.scores.at(best)) best = k;
    }
    hits += rec.truth.test(best) ? 1 : 0;
    ++used;
  }
  return used > 0 ? static_cast<double>(hits) / static_cast<double>(used) : 0.0;
}

LabelSet ancestor_closure(const Taxonomy& tax, const LabelSet& members) {
  LabelSet closed = members;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int64_t id = 0; id < tax.size(); ++id) {
      if (!closed.test(id)) continue;
      int64_t p = tax.parent(id);
      if (p != kRootParent && !closed.test(p)) {
        closed.set(p);
        changed = true;
      }
    }
  }
  return closed;
}

}  // namespace tempocoh::oracle
