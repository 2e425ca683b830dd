#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace donorpl {

/// Pseudo-Voigt profile: eta * Lorentzian + (1 - eta) * Gaussian, both with
/// the same FWHM. The intrinsic width is combined in quadrature with the
/// instrument width.
///
/// The profile has compact support |x| <= cutoff * FWHM_eff. The Lorentzian
/// component is lowered by its value at the cutoff (so it reaches zero
/// continuously) and renormalized; each component integrates to exactly 1.
struct LineshapeSpec {
  double eta = 0.5;
  double fwhm = 7.7;             // µeV, intrinsic
  double instrument_fwhm = 1.8;  // µeV
  double cutoff = 10.0;          // in units of effective FWHM

  double effective_fwhm() const { return std::hypot(fwhm, instrument_fwhm); }
  double half_support() const { return cutoff * effective_fwhm(); }

  void validate() const {
    if (!(fwhm > 0.0) || !std::isfinite(fwhm)) throw std::invalid_argument("fwhm must be > 0");
    if (!(instrument_fwhm >= 0.0)) throw std::invalid_argument("instrument_fwhm must be >= 0");
    if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in [0, 1]");
    if (!(cutoff >= 3.0)) throw std::invalid_argument("lineshape cutoff must be >= 3 FWHM");
  }
};

/// Unit-area profile evaluated at offset x (µeV) from the line center.
class PseudoVoigt {
 public:
  explicit PseudoVoigt(const LineshapeSpec& spec) : eta_(spec.eta) {
    spec.validate();
    const double w = spec.effective_fwhm();
    support_ = spec.half_support();
    sigma_ = w / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    gamma_ = 0.5 * w;
    gauss_norm_ = 1.0 / (sigma_ * std::sqrt(2.0 * std::numbers::pi) *
                         std::erf(support_ / (sigma_ * std::numbers::sqrt2)));
    const double u = support_ / gamma_;
    lorentz_floor_ = 1.0 / (1.0 + u * u);
    // integral over the support of [1/(1+(x/g)^2) - floor]
    const double raw = 2.0 * gamma_ * std::atan(u) - 2.0 * support_ * lorentz_floor_;
    lorentz_norm_ = 1.0 / raw;
  }

  double operator()(double x) const {
    if (std::abs(x) > support_) return 0.0;
    const double z = x / sigma_;
    const double g = gauss_norm_ * std::exp(-0.5 * z * z);
    const double v = x / gamma_;
    const double l = lorentz_norm_ * (1.0 / (1.0 + v * v) - lorentz_floor_);
    return eta_ * l + (1.0 - eta_) * g;
  }

  double support() const { return support_; }

 private:
  double eta_;
  double support_ = 0.0;
  double sigma_ = 0.0;
  double gamma_ = 0.0;
  double gauss_norm_ = 0.0;
  double lorentz_floor_ = 0.0;
  double lorentz_norm_ = 0.0;
};

}  // namespace donorpl
