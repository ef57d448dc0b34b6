#include "wave/nn/parameters.hpp"

#include "wave/io.hpp"

#include <cstdint>
#include <cstring>

namespace wave::nn {

void ParameterSet::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return entries_[it->second].second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return entries_[it->second].second;
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (!entries_[i].second.same_shape(other.entries_[i].second)) return false;
  }
  return true;
}

void ParameterSet::require_same_layout(const ParameterSet& other, std::string_view context) const {
  const std::string where(context);
  if (entries_.size() != other.entries_.size()) {
    throw std::invalid_argument(where + ": parameter count " + std::to_string(entries_.size()) +
                                " vs " + std::to_string(other.entries_.size()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [na, ta] = entries_[i];
    const auto& [nb, tb] = other.entries_[i];
    if (na != nb) throw std::invalid_argument(where + ": parameter name " + na + " vs " + nb);
    if (!ta.same_shape(tb)) {
      throw std::invalid_argument(where + ": shape of " + na + " " + shape_string(ta.shape()) +
                                  " vs " + shape_string(tb.shape()));
    }
  }
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& [name, t] : entries_) out.add(name, Tensor(t.shape()));
  return out;
}

Vector ParameterSet::flatten() const {
  Vector flat(static_cast<Eigen::Index>(element_count()));
  Eigen::Index offset = 0;
  for (const auto& [name, t] : entries_) {
    const auto n = static_cast<Eigen::Index>(t.size());
    flat.segment(offset, n) = Eigen::Map<const Vector>(t.data().data(), n);
    offset += n;
  }
  return flat;
}

void ParameterSet::unflatten(const Eigen::Ref<const Vector>& flat) {
  if (static_cast<std::size_t>(flat.size()) != element_count()) {
    throw std::invalid_argument("unflatten: expected " + std::to_string(element_count()) +
                                " values, got " + std::to_string(flat.size()));
  }
  Eigen::Index offset = 0;
  for (auto& [name, t] : entries_) {
    const auto n = static_cast<Eigen::Index>(t.size());
    Eigen::Map<Vector>(t.data().data(), n) = flat.segment(offset, n);
    offset += n;
  }
}

double ParameterSet::squared_norm() const {
  double s = 0.0;
  for (const auto& [name, t] : entries_) s += t.matrix().squaredNorm();
  return s;
}

bool ParameterSet::all_finite() const {
  for (const auto& [name, t] : entries_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

ParameterSet soft_update(const ParameterSet& target, const ParameterSet& source, double tau) {
  ParameterSet out = target;
  soft_update_in_place(out, source, tau);
  return out;
}

void soft_update_in_place(ParameterSet& target, const ParameterSet& source, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("soft_update: tau must lie in [0, 1], got " + format_double(tau));
  }
  target.require_same_layout(source, "soft_update");
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto t = target.entry(i).second.matrix();
    auto s = source.entry(i).second.matrix();
    t = (1.0 - tau) * t + tau * s;
  }
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(T));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "WAVEPARM";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::string encode_checkpoint(const ParameterSet& params) {
  std::string out(kMagic);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.data()) put_le<double>(out, v);
  }
  return out;
}

ParameterSet decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw std::runtime_error("not a parameter checkpoint");
  if (auto v = r.get<std::uint32_t>(); v != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(v));
  }
  const auto count = r.get<std::uint64_t>();
  ParameterSet params;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len));
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    Tensor t(shape);
    for (auto& v : t.data()) v = r.get<double>();
    params.add(std::move(name), std::move(t));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint records");
  return params;
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  atomic_write_file(path, encode_checkpoint(params));
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace wave::nn
