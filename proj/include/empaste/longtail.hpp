#pragma once

#include <map>
#include <string>
#include <vector>

#include "empaste/proposals.hpp"
#include "empaste/rng.hpp"

namespace empaste {

struct ParetoSpec {
  double b = 6.0;
  std::size_t max_count = 800;
  std::size_t min_count = 1;

  void validate() const;  // InvalidSpec
};

// f(x, b) = b / x^(b+1), for x >= 1.
double pareto_pdf(double x, double b);

// Evaluates the pdf on x_i = 1 + i/(C-1) and maps the values affinely onto
// [min_count, max_count]. Endpoints are exact; the sequence is non-increasing.
std::vector<std::size_t> pareto_reference_counts(const ParetoSpec& spec, std::size_t num_classes);

struct MaskRef {
  std::string image_id;
  std::string instance_id;

  friend auto operator<=>(const MaskRef&, const MaskRef&) = default;
};

using ClassIndex = std::map<ClassId, std::vector<MaskRef>>;

// Throws InvalidArgument on a duplicate (image_id, instance_id) within a class.
void validate_class_index(const ClassIndex& index);

// Classes in descending order of availability; ties by class id.
std::vector<ClassId> longtail_class_order(const ClassIndex& index);

// The i-th class in longtail_class_order receives reference[i], capped at its
// availability, sampled uniformly without replacement. Kept masks retain
// their input order.
ClassIndex subsample_longtail(const ClassIndex& index, const std::vector<std::size_t>& reference, Rng& rng);

}  // namespace empaste
