#pragma once

// Image-level category co-occurrence counts.

#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <vector>

#include "ctxmask/coco.hpp"

namespace ctxmask {

/// Symmetric matrix over the dataset's categories (id-ascending order):
/// entry (i,j) counts images containing at least one instance of both;
/// the diagonal counts images containing category i at all. Presence is
/// per-image regardless of instance count or crowd flag.
struct CooccurrenceMatrix {
  std::vector<std::int64_t> category_ids;  // ascending
  std::vector<std::int64_t> counts;        // row-major, size k*k

  std::size_t index_of(std::int64_t id) const {
    for (std::size_t i = 0; i < category_ids.size(); ++i)
      if (category_ids[i] == id) return i;
    throw std::invalid_argument("unknown category id " + std::to_string(id));
  }
  std::int64_t count(std::int64_t a, std::int64_t b) const {
    return counts[index_of(a) * category_ids.size() + index_of(b)];
  }
};

inline CooccurrenceMatrix cooccurrence_matrix(const Dataset& ds) {
  CooccurrenceMatrix m;
  for (const Category& c : ds.categories()) m.category_ids.push_back(c.id);
  std::sort(m.category_ids.begin(), m.category_ids.end());
  const std::size_t k = m.category_ids.size();
  m.counts.assign(k * k, 0);

  for (const ImageInfo& image : ds.images()) {
    std::set<std::size_t> present;
    for (std::size_t ai : ds.annotations_of_image(image.id))
      present.insert(m.index_of(ds.annotations()[ai].category_id));
    for (std::size_t i : present)
      for (std::size_t j : present) ++m.counts[i * k + j];
  }
  return m;
}

/// P(b present | a present); empty when a never occurs.
inline std::optional<double> conditional_presence(const CooccurrenceMatrix& m,
                                                  std::int64_t a, std::int64_t b) {
  const std::int64_t aa = m.count(a, a);
  if (aa == 0) return std::nullopt;
  return static_cast<double>(m.count(a, b)) / static_cast<double>(aa);
}

inline void write_cooccurrence_csv(const CooccurrenceMatrix& m, const Dataset& ds,
                                   std::ostream& out) {
  const std::size_t k = m.category_ids.size();
  for (std::size_t i = 0; i < k; ++i) {
    if (i) out << ',';
    const Category* c = ds.find_category(m.category_ids[i]);
    out << (c ? c->name : std::to_string(m.category_ids[i]));
  }
  out << '\n';
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (j) out << ',';
      out << m.counts[i * k + j];
    }
    out << '\n';
  }
}

}  // namespace ctxmask
