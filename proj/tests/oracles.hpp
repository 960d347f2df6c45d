#pragma once

// Reference implementations written directly from the definitions, kept
// separate from the library code they check.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "loong/text.hpp"

namespace loong::oracle {

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Sort the whole bank by similarity (stable, so bank order breaks ties),
/// then take the first k.
inline std::vector<std::size_t> topk(const std::vector<std::vector<float>>& bank, const std::vector<float>& q,
                                     std::size_t k) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < bank.size(); ++i) all.emplace_back(cosine(bank[i], q), i);
  std::stable_sort(all.begin(), all.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

/// chrF from the definition: character n-gram multisets over the text
/// with whitespace removed, per-order precision and recall, F-beta per
/// order, averaged over the orders that occur on either side.
inline double chrf(const std::string& hyp, const std::string& ref, int max_n = 6, double beta = 2.0) {
  auto chars = [](const std::string& s) {
    std::u32string out;
    for (char32_t c : text::decode_utf8(s)) {
      if (!text::is_space(c)) out += c;
    }
    return out;
  };
  const auto h = chars(hyp);
  const auto r = chars(ref);
  double total = 0.0;
  int orders = 0;
  for (int n = 1; n <= max_n; ++n) {
    std::map<std::u32string, int> hc, rc;
    for (std::size_t i = 0; i + n <= h.size(); ++i) ++hc[h.substr(i, n)];
    for (std::size_t i = 0; i + n <= r.size(); ++i) ++rc[r.substr(i, n)];
    int hn = 0, rn = 0, match = 0;
    for (const auto& [g, c] : hc) hn += c;
    for (const auto& [g, c] : rc) rn += c;
    if (hn == 0 && rn == 0) continue;
    ++orders;
    for (const auto& [g, c] : hc) {
      const auto it = rc.find(g);
      if (it != rc.end()) match += std::min(c, it->second);
    }
    if (match == 0) continue;
    const double p = static_cast<double>(match) / hn;
    const double rec = static_cast<double>(match) / rn;
    total += (1 + beta * beta) * p * rec / (beta * beta * p + rec);
  }
  return orders == 0 ? 0.0 : 100.0 * total / orders;
}

inline std::vector<double> running_mean(const std::vector<double>& xs) {
  std::vector<double> out;
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sum += xs[i];
    out.push_back(sum / static_cast<double>(i + 1));
  }
  return out;
}

}  // namespace loong::oracle
