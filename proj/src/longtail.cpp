#include "empaste/longtail.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace empaste {

void ParetoSpec::validate() const {
  if (!(b > 0.0) || !std::isfinite(b)) throw Error(ErrorCode::InvalidSpec, "pareto shape b must be positive");
  if (min_count < 1) throw Error(ErrorCode::InvalidSpec, "pareto min_count must be at least 1");
  if (max_count < min_count) throw Error(ErrorCode::InvalidSpec, "pareto max_count must be >= min_count");
}

double pareto_pdf(double x, double b) { return x < 1.0 ? 0.0 : b / std::pow(x, b + 1.0); }

std::vector<std::size_t> pareto_reference_counts(const ParetoSpec& spec, std::size_t num_classes) {
  spec.validate();
  if (num_classes < 2) throw Error(ErrorCode::InvalidSpec, "long-tail reference needs at least 2 classes");
  const double last = static_cast<double>(num_classes - 1);
  std::vector<double> f(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) f[i] = pareto_pdf(1.0 + static_cast<double>(i) / last, spec.b);
  const double hi = f.front();
  const double lo = f.back();
  const double lo_c = static_cast<double>(spec.min_count);
  const double span_c = static_cast<double>(spec.max_count - spec.min_count);
  std::vector<std::size_t> counts(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) {
    const double t = (f[i] - lo) / (hi - lo);
    counts[i] = static_cast<std::size_t>(std::llround(lo_c + t * span_c));
  }
  counts.front() = spec.max_count;
  counts.back() = spec.min_count;
  return counts;
}

void validate_class_index(const ClassIndex& index) {
  for (const auto& [cls, refs] : index) {
    std::set<MaskRef> seen;
    for (const auto& r : refs)
      if (!seen.insert(r).second)
        throw Error(ErrorCode::InvalidArgument, "class " + std::to_string(cls) + " lists mask " + r.image_id + "/" +
                                                    r.instance_id + " twice");
  }
}

std::vector<ClassId> longtail_class_order(const ClassIndex& index) {
  std::vector<ClassId> order;
  for (const auto& [cls, refs] : index) order.push_back(cls);
  std::stable_sort(order.begin(), order.end(),
                   [&](ClassId a, ClassId b) { return index.at(a).size() > index.at(b).size(); });
  return order;
}

ClassIndex subsample_longtail(const ClassIndex& index, const std::vector<std::size_t>& reference, Rng& rng) {
  if (reference.size() != index.size())
    throw Error(ErrorCode::InvalidArgument, "reference has " + std::to_string(reference.size()) +
                                                " counts for " + std::to_string(index.size()) + " classes");
  validate_class_index(index);
  const auto order = longtail_class_order(index);
  ClassIndex out;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& refs = index.at(order[rank]);
    const std::size_t take = std::min(reference[rank], refs.size());
    std::vector<std::size_t> idx(refs.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    auto& kept = out[order[rank]];
    for (std::size_t i : idx) kept.push_back(refs[i]);
  }
  return out;
}

}  // namespace empaste
