#pragma once

#include <functional>
#include <vector>

#include "fracount/types.hpp"

namespace fracount::counting {

enum class TieRule { LowestIndex };

// How the displaced mass xi enters locality-level output: spread over
// localities in proportion to the placed mass of the person's covariate
// stratum, or reported as a separate unplaced row.
enum class XiAllocation { ProportionalWithinStratum, SeparateRow };

using StratumFn = std::function<int(const PersonRecord&)>;

// argmax of mu as a one-hot choice; exact ties go to the lowest index
Eigen::VectorXi classify(const PersonRecord& record, const FractionalCounter& counter,
                         TieRule tie_rule = TieRule::LowestIndex);

struct FractionalOptions {
  bool cluster_by_family = false;  // perfectly-correlated-within-family variance bound
};

CountEstimate count_classifier(const std::vector<PersonRecord>& pd,
                               const std::vector<FractionalCounter>& counters,
                               const std::vector<Locality>& localities);

CountEstimate count_fractional(const std::vector<PersonRecord>& pd,
                               const std::vector<FractionalCounter>& counters,
                               const std::vector<Locality>& localities,
                               const FractionalOptions& opts = {});

struct ThetaOptions {
  XiAllocation allocation = XiAllocation::ProportionalWithinStratum;
  StratumFn stratum;  // null = single national stratum
};

CountEstimate count_with_theta(const std::vector<PersonRecord>& pd,
                               const std::vector<FractionalCounter>& counters,
                               const std::vector<Locality>& localities,
                               const ThetaOptions& opts = {});

struct SocialTotal {
  double total = 0.0;
  double variance = 0.0;
};

// Register-based attribute total for one locality; attribute_variance is
// V(eps_hat - eps), zero for error-free attributes.
SocialTotal social_total(const std::vector<PersonRecord>& pd,
                         const std::vector<FractionalCounter>& counters,
                         const Locality& locality, double attribute_variance = 0.0);

void export_count_csv(const CountEstimate& est, const std::string& path,
                      std::uint64_t config_hash);

}  // namespace fracount::counting
