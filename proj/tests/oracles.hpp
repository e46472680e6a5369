#pragma once

// Independent reference implementations used only by the tests. They share
// no code path with the library routines they check.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace oracle {

struct Fragment {
  std::vector<std::string> tokens;
  std::size_t dialogue_start;
  std::size_t source_start;
};

struct FragmentStats {
  std::vector<Fragment> fragments;
  double density = 0.0;
  double coverage = 0.0;
};

// Exhaustive maximal-match scan: for every cursor position try every source
// offset and every run length, comparing whole substrings.
inline FragmentStats fragments(const std::vector<std::string>& source,
                               const std::vector<std::string>& stream) {
  FragmentStats out;
  std::size_t i = 0;
  double sq = 0;
  double lin = 0;
  while (i < stream.size()) {
    std::size_t best_len = 0;
    std::size_t best_src = 0;
    for (std::size_t j = 0; j < source.size(); ++j) {
      for (std::size_t len = 1; i + len <= stream.size() && j + len <= source.size(); ++len) {
        bool equal = true;
        for (std::size_t k = 0; k < len; ++k) {
          if (stream[i + k] != source[j + k]) {
            equal = false;
            break;
          }
        }
        if (equal && len > best_len) {
          best_len = len;
          best_src = j;
        }
      }
    }
    if (best_len > 0) {
      out.fragments.push_back(
          {std::vector<std::string>(stream.begin() + i, stream.begin() + i + best_len), i,
           best_src});
      sq += static_cast<double>(best_len) * static_cast<double>(best_len);
      lin += static_cast<double>(best_len);
      i += best_len;
    } else {
      i += 1;
    }
  }
  if (!stream.empty()) {
    out.density = sq / static_cast<double>(stream.size());
    out.coverage = lin / static_cast<double>(stream.size());
  }
  return out;
}

// Pearson r via the z-score product formula in long double.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double vx = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  const long double sx = std::sqrt(vx / (n - 1));
  const long double sy = std::sqrt(vy / (n - 1));
  long double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += ((x[i] - mx) / sx) * ((y[i] - my) / sy);
  return static_cast<double>(acc / (n - 1));
}

// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) ++less;
      if (w == v[i]) ++equal;
    }
    r[i] = 1.0 + static_cast<double>(less) + (static_cast<double>(equal) - 1.0) / 2.0;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks(x), ranks(y));
}

}  // namespace oracle
