#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavepax/dispersion.hpp"
#include "wavepax/field.hpp"

namespace wavepax {

// Smooth radial cutoff: 1 for |eta| <= 1/2, 0 for |eta| >= 1.
double cutoff_profile(double eta);

// Psi((k - k0) / radius) on the grid nodes. Throws RadiusUnresolvable if radius <= 2 dk.
std::vector<double> build_cutoff(const Grid& grid, const KVec& k0, double radius);

// Cutoff whose plateau covers the full radius: Psi((k - k0) / (2 radius)).
std::vector<double> build_wide_cutoff(const Grid& grid, const KVec& k0, double radius);

enum class EnvelopeFamily { Gaussian, Sech, Bump };

struct Envelope {
  EnvelopeFamily family = EnvelopeFamily::Gaussian;
  // r-space width; the k-space width is 1 / width.
  double width = 1.0;
  double amplitude = 1.0;

  // Fourier transform Phi^(eta).
  double hat(const KVec& eta, int d) const;
  // Phi(r); bump has no closed form and throws.
  double value(const KVec& r, int d) const;

  nlohmann::json to_json() const;
  static Envelope from_json(const nlohmann::json& j);
};

struct WavepacketSpec {
  int n = 1;
  KVec k_star;
  KVec r_star;
  double beta = 0.1;
  double epsilon = 0.1;
  Envelope envelope;
  bool plus = true;
  bool minus = true;
  // Build the minus part as the conjugate reflection of the plus part.
  bool doublet_reality = true;

  double cutoff_radius() const;
  nlohmann::json to_json(int d) const;
  static WavepacketSpec from_json(const nlohmann::json& j, int d);
};

// Component index carrying the conjugate partner used by the reality condition.
int conj_partner(const DispersionModel& model, int c);

ModalField build_wavepacket(const WavepacketSpec& spec, const DispersionModel& model, const Grid& grid);
ModalField build_multi_wavepacket(const std::vector<WavepacketSpec>& specs, const DispersionModel& model,
                                  const Grid& grid);

// Cutoff-and-project: Psi_wide(zeta k*) Pi_{n,zeta} field, with radius chosen by the caller.
ModalField packet_component(const ModalField& field, const DispersionModel& model, int n, int zeta,
                            const KVec& k_star, double radius, bool wide = true);

// L1 norm of field - sum over declared zeta of Psi_wide(zeta k*) Pi_{n,zeta} field.
double regularity_defect(const ModalField& field, const WavepacketSpec& spec, const DispersionModel& model);

// a(r') = || grad_k (e^{i r' k} field) ||_{L1}, differentiated spectrally on the periodic grid.
double position_detection(const ModalField& field, const KVec& r_probe);

struct SearchBox {
  KVec center;
  KVec half_width;
};

struct PositionEstimate {
  KVec r_hat;
  double a_min = 0.0;
  double diameter = 0.0;
  int components = 0;
  std::size_t sublevel_points = 0;
};

// Coarse scan with the given step, golden-section refinement per axis, then the sublevel-set
// {a <= threshold} on the scan. Throws EmptySublevelSet if no scan point is below threshold.
PositionEstimate locate_position(const ModalField& field, double threshold, const SearchBox& box, double step);

// sum_i [ beta^{1+eps} a(r_i, w_i) + ||w_i||_{L1} ].
double particle_norm(const std::vector<ModalField>& parts, const std::vector<KVec>& positions, double beta,
                     double epsilon);

}  // namespace wavepax
