#pragma once

#include <string>
#include <vector>

#include "fracount/types.hpp"

namespace fracount::model_io {

// structured text model file: kind, epoch, coefficient vector, covariance
void save_param_state(const ParamState& state, const std::string& path,
                      std::uint64_t config_hash);
ParamState load_param_state(const std::string& path);

// counters CSV: id, q, mu components, xi, theta
void save_counters_csv(const std::vector<PersonRecord>& pd,
                       const std::vector<FractionalCounter>& counters,
                       const std::string& path, std::uint64_t config_hash);

}  // namespace fracount::model_io
