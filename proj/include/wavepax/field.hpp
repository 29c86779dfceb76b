#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavepax/fft.hpp"
#include "wavepax/grid.hpp"

namespace wavepax {

enum class Frame { Slow, Fast };

// Complex ncomp-component function on the k-grid. Storage is components-major.
class ModalField {
 public:
  ModalField() = default;
  ModalField(const Grid& grid, int ncomp, Frame frame = Frame::Slow);

  const Grid& grid() const { return grid_; }
  int ncomp() const { return ncomp_; }
  std::size_t nodes() const { return grid_.size(); }
  Frame frame() const { return frame_; }
  void set_frame(Frame f) { frame_ = f; }

  cplx* comp(int c) { return data_.data() + static_cast<std::size_t>(c) * nodes(); }
  const cplx* comp(int c) const { return data_.data() + static_cast<std::size_t>(c) * nodes(); }
  cplx& at(int c, std::size_t i) { return comp(c)[i]; }
  const cplx& at(int c, std::size_t i) const { return comp(c)[i]; }
  CVec& data() { return data_; }
  const CVec& data() const { return data_; }

  void set_zero();
  bool all_finite() const;
  bool same_shape(const ModalField& o) const;

  ModalField& operator+=(const ModalField& o);
  ModalField& operator-=(const ModalField& o);
  ModalField& operator*=(cplx s);
  friend ModalField operator+(ModalField a, const ModalField& b) { return a += b; }
  friend ModalField operator-(ModalField a, const ModalField& b) { return a -= b; }

  // sum_k |v(k)| (1 + |k|)^a dk^d, |.| the Euclidean norm over components.
  double l1_norm(double a = 0.0) const;
  double max_abs() const;

 private:
  Grid grid_;
  int ncomp_ = 0;
  Frame frame_ = Frame::Slow;
  CVec data_;
};

double l1_distance(const ModalField& a, const ModalField& b);
// Largest l1_norm over the samples.
double sup_time_norm(const std::vector<ModalField>& samples, double a = 0.0);

// k -> r: U(r) = (2 pi)^{-d} sum_k U^(k) e^{i r k} dk^d on the dual grid.
CVec to_r_space(const Grid& grid, const cplx* khat);
// r -> k: U^(k) = sum_r U(r) e^{-i r k} dr^d.
CVec to_k_space(const Grid& grid, const cplx* u);

// Binary container: "WPXS", uint32 header length, JSON header, little-endian complex payload.
void write_snapshot(const std::filesystem::path& path, const ModalField& f, bool single_precision = false,
                    const nlohmann::json& meta = nlohmann::json::object());
ModalField read_snapshot(const std::filesystem::path& path, nlohmann::json* meta = nullptr);
// 1D only: k, then re/im per component. With r_space the columns are r and the transformed values.
void write_csv(const std::filesystem::path& path, const ModalField& f, bool r_space = false);

}  // namespace wavepax
