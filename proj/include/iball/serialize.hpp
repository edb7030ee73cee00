#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "iball/error.hpp"
#include "iball/models.hpp"

namespace iball::serialize {

inline constexpr std::array<char, 4> kMagic{'I', 'B', 'L', 'M'};
inline constexpr std::uint32_t kVersion = 1;

enum class Tag : std::uint32_t { Linear = 0, Kernel = 1, Fast = 2, Zero = 3, Sum3 = 4 };

/// A model with the hyperparameters it was fitted with and the resolved
/// configuration text it came from.
struct Snapshot {
  models::Model model;
  models::Hyperparams hp;
  std::string config;
};

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { bytes(v, 4); }
  void u64(std::uint64_t v) { bytes(v, 8); }
  void f64(double v) { bytes(std::bit_cast<std::uint64_t>(v), 8); }
  void index(Index v) { u64(static_cast<std::uint64_t>(v)); }

  void vec(const Vector& v) {
    index(v.size());
    for (Index k = 0; k < v.size(); ++k) f64(v(k));
  }
  /// Rows, cols, then entries row by row.
  void mat(const Matrix& m) {
    index(m.rows());
    index(m.cols());
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  void str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  void bytes(std::uint64_t v, int n) {
    char buf[8];
    for (int k = 0; k < n; ++k) buf[k] = static_cast<char>((v >> (8 * k)) & 0xFF);
    out_.write(buf, n);
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }
  double f64() { return std::bit_cast<double>(bytes(8)); }
  Index index(std::uint64_t limit = 1ull << 32) {
    std::uint64_t v = u64();
    if (v > limit) throw ValidationError("model file: implausible size " + std::to_string(v));
    return static_cast<Index>(v);
  }

  Vector vec() {
    Vector v(index());
    for (Index k = 0; k < v.size(); ++k) v(k) = f64();
    return v;
  }
  Matrix mat() {
    Index r = index(), c = index();
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = f64();
    return m;
  }
  std::string str() {
    std::string s(static_cast<std::size_t>(index()), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    check();
    return s;
  }
  void raw(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    check();
  }

 private:
  std::uint64_t bytes(int n) {
    unsigned char buf[8] = {};
    in_.read(reinterpret_cast<char*>(buf), n);
    check();
    std::uint64_t v = 0;
    for (int k = 0; k < n; ++k) v |= static_cast<std::uint64_t>(buf[k]) << (8 * k);
    return v;
  }
  void check() {
    if (!in_) throw IoError("model file is truncated");
  }
  std::istream& in_;
};

struct Shape {
  Tag tag;
  bool pooled = false;
  Index n_domains = 0, d = 0, r = 0;
  std::vector<Index> offsets;
};

inline Shape shape_of(const models::Model& m) {
  return std::visit(
      [](const auto& v) -> Shape {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, models::ZeroModel>) {
          return {Tag::Zero};
        } else if constexpr (std::is_same_v<T, models::Sum3Model>) {
          return {Tag::Sum3};
        } else if constexpr (std::is_same_v<T, models::LinearModel>) {
          Index d = v.weights.empty() ? 0 : v.weights.front().size();
          std::vector<Index> off;
          for (Index i = 0; i <= v.n_domains(); ++i) off.push_back(i * d);
          return {Tag::Linear, v.pooled, v.n_domains(), d, 0, off};
        } else if constexpr (std::is_same_v<T, models::KernelModel>) {
          Index d = 0;
          std::vector<Index> off{0};
          for (const auto& f : v.features) {
            d = std::max(d, f.cols());
            off.push_back(off.back() + f.rows());
          }
          return {Tag::Kernel, v.pooled, v.n_domains(), d, 0, off};
        } else {
          return {Tag::Fast, false, v.n_domains(), v.feature_dim(), v.eig.rank(), v.offsets};
        }
      },
      m);
}

}  // namespace detail

/// Header (magic, version, tag, flags, n_d, d, r, theta, lambda, sigma),
/// block offsets, payload, then the configuration text. Little-endian.
inline void write_model(std::ostream& out, const Snapshot& snap) {
  detail::Writer w(out);
  auto shape = detail::shape_of(snap.model);
  out.write(kMagic.data(), 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(shape.tag));
  w.u32(shape.pooled ? 1u : 0u);
  w.index(shape.n_domains);
  w.index(shape.d);
  w.index(shape.r);
  w.f64(snap.hp.theta);
  w.f64(snap.hp.lambda);
  w.f64(snap.hp.kernel.sigma);
  w.index(static_cast<Index>(shape.offsets.size()));
  for (Index o : shape.offsets) w.index(o);

  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, models::Sum3Model>) {
          w.u32(m.normalizer.kind == Normalizer::Kind::Log2 ? 0u : 1u);
          w.f64(m.normalizer.max_count);
        } else if constexpr (std::is_same_v<T, models::LinearModel>) {
          for (const auto& v : m.weights) w.vec(v);
        } else if constexpr (std::is_same_v<T, models::KernelModel>) {
          for (std::size_t i = 0; i < m.coefficients.size(); ++i) {
            w.vec(m.coefficients[i]);
            w.mat(m.features[i]);
          }
        } else if constexpr (std::is_same_v<T, models::FastModel>) {
          w.index(m.hp.rank);
          w.mat(m.eig.vectors);
          w.vec(m.eig.values);
          w.vec(m.y);
          w.vec(m.weights);
          for (const auto& f : m.features) w.mat(f);
        }
      },
      snap.model);
  w.str(snap.config);
  if (!out) throw IoError("write_model: stream write failed");
}

inline Snapshot read_model(std::istream& in) {
  detail::Reader r(in);
  std::array<char, 4> magic{};
  r.raw(magic.data(), 4);
  if (magic != kMagic) throw ValidationError("not a model file (bad magic)");
  if (auto v = r.u32(); v != kVersion) throw ValidationError("unsupported model file version " + std::to_string(v));
  auto tag = static_cast<Tag>(r.u32());
  bool pooled = (r.u32() & 1u) != 0;
  const Index nd = r.index();
  r.index();  // d
  r.index();  // r
  Snapshot snap;
  snap.hp.theta = r.f64();
  snap.hp.lambda = r.f64();
  snap.hp.kernel.sigma = r.f64();
  std::vector<Index> offsets(static_cast<std::size_t>(r.index()));
  for (auto& o : offsets) o = r.index();

  switch (tag) {
    case Tag::Zero: snap.model = models::ZeroModel{}; break;
    case Tag::Sum3: {
      Normalizer n;
      n.kind = r.u32() == 0 ? Normalizer::Kind::Log2 : Normalizer::Kind::MinMax;
      n.max_count = r.f64();
      snap.model = models::Sum3Model{n};
      break;
    }
    case Tag::Linear: {
      models::LinearModel m;
      m.pooled = pooled;
      for (Index i = 0; i < nd; ++i) m.weights.push_back(r.vec());
      snap.model = std::move(m);
      break;
    }
    case Tag::Kernel: {
      models::KernelModel m;
      m.pooled = pooled;
      m.kernel = snap.hp.kernel;
      for (Index i = 0; i < nd; ++i) {
        m.coefficients.push_back(r.vec());
        m.features.push_back(r.mat());
      }
      snap.model = std::move(m);
      break;
    }
    case Tag::Fast: {
      models::FastModel m;
      snap.hp.rank = r.index();
      m.hp = snap.hp;
      m.eig.vectors = r.mat();
      m.eig.values = r.vec();
      m.y = r.vec();
      m.weights = r.vec();
      for (Index i = 0; i < nd; ++i) m.features.push_back(r.mat());
      m.offsets = offsets;
      require(m.eig.vectors.rows() == m.y.size() && m.eig.vectors.cols() == m.eig.values.size() &&
                  static_cast<Index>(offsets.size()) == nd + 1 && offsets.back() == m.y.size(),
              "model file: inconsistent fast-model shapes");
      snap.model = std::move(m);
      break;
    }
    default: throw ValidationError("model file: unknown formulation tag");
  }
  snap.config = r.str();
  return snap;
}

}  // namespace iball::serialize
