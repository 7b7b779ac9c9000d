#include "fracount/model_io.hpp"

#include <fstream>
#include <stdexcept>

namespace fracount::model_io {

void save_param_state(const ParamState& state, const std::string& path,
                      std::uint64_t config_hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  out << "fracount-model v1\n";
  out << "# config_hash=" << config_hash << "\n";
  out << "kind " << (state.kind.empty() ? "unknown" : state.kind) << "\n";
  out << "epoch " << state.epoch << "\n";
  out << "ridge " << state.ridge << "\n";
  out << "converged " << (state.converged ? 1 : 0) << "\n";
  out << "dim " << state.beta_hat.size() << "\n";
  out << "beta";
  for (int j = 0; j < state.beta_hat.size(); ++j) out << ' ' << state.beta_hat[j];
  out << "\n";
  for (int i = 0; i < state.sigma_hat.rows(); ++i) {
    out << "sigma";
    for (int j = 0; j < state.sigma_hat.cols(); ++j) out << ' ' << state.sigma_hat(i, j);
    out << "\n";
  }
}

ParamState load_param_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "fracount-model" || version != "v1")
    throw std::runtime_error("load_param_state: unrecognized format in " + path);
  std::string line;
  std::getline(in, line);  // rest of header line
  std::getline(in, line);  // config hash comment
  ParamState st;
  std::string word;
  int converged = 1, dim = 0;
  in >> word >> st.kind;
  in >> word >> st.epoch;
  in >> word >> st.ridge;
  in >> word >> converged;
  in >> word >> dim;
  st.converged = converged != 0;
  st.beta_hat.resize(dim);
  in >> word;
  for (int j = 0; j < dim; ++j) in >> st.beta_hat[j];
  st.sigma_hat.resize(dim, dim);
  for (int i = 0; i < dim; ++i) {
    in >> word;
    for (int j = 0; j < dim; ++j) in >> st.sigma_hat(i, j);
  }
  if (!in) throw std::runtime_error("load_param_state: truncated file " + path);
  return st;
}

void save_counters_csv(const std::vector<PersonRecord>& pd,
                       const std::vector<FractionalCounter>& counters,
                       const std::string& path, std::uint64_t config_hash) {
  if (pd.size() != counters.size())
    throw std::invalid_argument("save_counters_csv: size mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(12);
  out << "# config_hash=" << config_hash << "\n";
  out << "id,q,mu,xi,theta\n";
  for (std::size_t k = 0; k < pd.size(); ++k) {
    out << pd[k].id << ',' << pd[k].q() << ',';
    for (int j = 0; j < counters[k].mu.size(); ++j)
      out << (j ? ";" : "") << counters[k].mu[j];
    out << ',' << counters[k].xi << ',' << counters[k].theta << "\n";
  }
}

}  // namespace fracount::model_io
