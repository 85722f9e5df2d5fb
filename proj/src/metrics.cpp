#include "cmask/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cmask/errors.hpp"

namespace cmask {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_matching(const std::vector<double>& ref, const std::vector<double>& est,
                      const char* what) {
  if (ref.size() != est.size()) throw ParamError(std::string(what) + ": length mismatch");
  if (ref.empty()) throw ParamError(std::string(what) + ": empty signals");
}

double ratio_db(double signal_energy, double error_energy) {
  if (error_energy == 0.0) return kMetricCapDb;
  if (signal_energy == 0.0) return -kMetricCapDb;
  double db = 10.0 * std::log10(signal_energy / error_energy);
  return std::clamp(db, -kMetricCapDb, kMetricCapDb);
}

}  // namespace

double sdr_db(const std::vector<double>& ref, const std::vector<double>& est) {
  require_matching(ref, est, "sdr_db");
  double sig = dot(ref, ref);
  double err = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    double d = ref[i] - est[i];
    err += d * d;
  }
  return ratio_db(sig, err);
}

double si_sdr_db(const std::vector<double>& ref, const std::vector<double>& est) {
  require_matching(ref, est, "si_sdr_db");
  double ref_energy = dot(ref, ref);
  if (ref_energy == 0.0) return -kMetricCapDb;
  double alpha = dot(est, ref) / ref_energy;
  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    double s = alpha * ref[i];
    double e = est[i] - s;
    sig += s * s;
    err += e * e;
  }
  return ratio_db(sig, err);
}

}  // namespace cmask
