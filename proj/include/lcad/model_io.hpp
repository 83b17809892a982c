#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "lcad/massdetect.hpp"

namespace lcad {

// Model container (.lcm), little-endian:
//   magic "LCADMDL\0", u32 version, u32 model count, then per model:
//   i32 w1, r, C, K, smooth_side, u32 n_windows, i32 windows[n]
//   i32 enhance window, f64 lambda, i32 target height, i32 target family
//   i32 training images
//   matrix pc_mean (1 x d), pc_basis (C x d), mass centroids, normal centroids
// Each matrix is u64 rows, u64 cols, then rows*cols f64 in row-major order.

inline constexpr char kModelMagic[8] = {'L', 'C', 'A', 'D', 'M', 'D', 'L', '\0'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "model I/O assumes a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  template <typename Derived>
  void put_matrix(const Eigen::MatrixBase<Derived>& m) {
    put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(m(r, c));
  }
  std::vector<unsigned char> bytes;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& b) : bytes_(b) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw Error("corrupt model file: truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  RealMatrix get_matrix() {
    const auto rows = get<std::uint64_t>(), cols = get<std::uint64_t>();
    if (rows > (1u << 24) || cols > (1u << 24) || rows * cols * 8 > bytes_.size() - pos_)
      throw Error("corrupt model file: bad matrix shape");
    RealMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>();
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_models(const std::vector<TrainedMassModel>& models) {
  detail::ByteWriter w;
  for (char c : kModelMagic) w.put<char>(c);
  w.put<std::uint32_t>(kModelVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(models.size()));
  for (const auto& m : models) {
    const auto& c = m.config;
    for (int v : {c.patch_w1, c.centroids_r, c.pca_C, c.knn_K, c.smooth_side}) w.put<std::int32_t>(v);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.mcs_windows.size()));
    for (int v : c.mcs_windows) w.put<std::int32_t>(v);
    w.put<std::int32_t>(m.enhance.window);
    w.put<double>(m.enhance.lambda);
    w.put<std::int32_t>(m.enhance.target_height);
    w.put<std::int32_t>(static_cast<std::int32_t>(m.enhance.target));
    w.put<std::int32_t>(m.training_images);
    w.put_matrix(m.pc_mean);
    w.put_matrix(m.pc_basis);
    w.put_matrix(m.mass_centroids);
    w.put_matrix(m.normal_centroids);
  }
  return std::move(w.bytes);
}

inline std::vector<TrainedMassModel> decode_models(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r(bytes);
  for (char c : kModelMagic)
    if (r.get<char>() != c) throw Error("not an lcad model file");
  if (r.get<std::uint32_t>() != kModelVersion) throw Error("unsupported model file version");
  const auto count = r.get<std::uint32_t>();
  if (count == 0 || count > 64) throw Error("corrupt model file: bad model count");
  std::vector<TrainedMassModel> models(count);
  for (auto& m : models) {
    auto& c = m.config;
    c.patch_w1 = r.get<std::int32_t>();
    c.centroids_r = r.get<std::int32_t>();
    c.pca_C = r.get<std::int32_t>();
    c.knn_K = r.get<std::int32_t>();
    c.smooth_side = r.get<std::int32_t>();
    const auto nw = r.get<std::uint32_t>();
    if (nw > 64) throw Error("corrupt model file: bad window count");
    c.mcs_windows.resize(nw);
    for (int& v : c.mcs_windows) v = r.get<std::int32_t>();
    m.enhance.window = r.get<std::int32_t>();
    m.enhance.lambda = r.get<double>();
    m.enhance.target_height = r.get<std::int32_t>();
    const auto family = r.get<std::int32_t>();
    if (family != 0 && family != 1) throw Error("corrupt model file: bad target family");
    m.enhance.target = static_cast<TargetFamily>(family);
    m.training_images = r.get<std::int32_t>();
    const RealMatrix mean = r.get_matrix();
    if (mean.rows() != 1) throw Error("corrupt model file: bad PC mean");
    m.pc_mean = mean;
    m.pc_basis = r.get_matrix();
    m.mass_centroids = r.get_matrix();
    m.normal_centroids = r.get_matrix();
    c.validate();
    m.enhance.validate();
    const Eigen::Index d = static_cast<Eigen::Index>(c.patch_w1) * c.patch_w1;
    if (m.pc_mean.cols() != d || m.pc_basis.rows() != c.pca_C || m.pc_basis.cols() != d ||
        m.mass_centroids.cols() != c.pca_C || m.normal_centroids.cols() != c.pca_C || m.mass_centroids.rows() == 0 ||
        m.normal_centroids.rows() == 0)
      throw Error("corrupt model file: inconsistent matrix shapes");
  }
  if (!r.done()) throw Error("corrupt model file: trailing bytes");
  return models;
}

inline std::vector<TrainedMassModel> load_models(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read model file: " + path.string());
  return decode_models({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

}  // namespace lcad
