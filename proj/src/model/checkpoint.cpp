#include "stpt/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "stpt/model/net.hpp"

namespace stpt::model {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& os, const Arr& a) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    std::uint64_t bits;
    double v = a[i];
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
  }
}

Arr read_doubles(std::istream& is, std::int64_t n) {
  Arr a(n);
  for (std::int64_t i = 0; i < n; ++i) {
    std::uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    a[i] = v;
  }
  return a;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");

  std::ostringstream header;
  for (const auto& [k, v] : config) header << k << "=" << v << "\n";
  header << "meta.update_counter=" << update_counter << "\n";
  const std::string h = header.str();

  const char version = static_cast<char>(kVersion);
  os.write(&version, 1);
  write_u64(os, h.size());
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  write_u64(os, records.size());
  for (const auto& [name, rec] : records) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(rec.first.size()));
    for (auto e : rec.first) write_u64(os, static_cast<std::uint64_t>(e));
    write_doubles(os, rec.second);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char version = 0;
  is.read(&version, 1);
  if (!is) throw std::runtime_error("checkpoint: empty file '" + path + "'");
  if (static_cast<std::uint8_t>(version) != kVersion) {
    throw std::runtime_error("checkpoint: unknown format version " +
                             std::to_string(static_cast<int>(version)) + " in '" + path + "'");
  }
  Checkpoint ck;
  const std::uint64_t hlen = read_u64(is);
  std::string header(hlen, '\0');
  is.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("checkpoint: truncated header in '" + path + "'");
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "meta.update_counter") {
      ck.update_counter = std::stoll(value);
    } else {
      ck.config[key] = value;
    }
  }
  const std::uint64_t count = read_u64(is);
  ck.records.reserve(count);
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint32_t nlen = read_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    const std::uint32_t rank = read_u32(is);
    Shape shape(rank);
    std::int64_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<std::int64_t>(read_u64(is));
      numel *= shape[i];
    }
    ck.records.emplace_back(std::move(name), std::make_pair(std::move(shape), read_doubles(is, numel)));
  }
  return ck;
}

const std::pair<Shape, Arr>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, rec] : records) {
    if (n == name) return &rec;
  }
  return nullptr;
}

bool Checkpoint::has_optimizer_state() const {
  for (const auto& [n, rec] : records) {
    if (n.rfind("adam.", 0) == 0) return true;
  }
  return false;
}

Checkpoint Checkpoint::capture(const STPTModel& model, const AdamOptimizer* opt,
                               std::map<std::string, std::string> config,
                               std::int64_t update_counter) {
  Checkpoint ck;
  ck.config = std::move(config);
  ck.update_counter = update_counter;
  for (const auto& [name, p] : model.parameters()) {
    ck.records.emplace_back(name, std::make_pair(p.shape(), p.array()));
  }
  if (opt) {
    for (const auto& [name, st] : opt->states()) {
      ck.records.emplace_back("adam.m." + name, std::make_pair(Shape{st.m.size()}, st.m));
      ck.records.emplace_back("adam.v." + name, std::make_pair(Shape{st.v.size()}, st.v));
      ck.records.emplace_back("adam.t." + name,
                              std::make_pair(Shape{1}, Arr::Constant(1, static_cast<double>(st.t))));
    }
  }
  return ck;
}

void Checkpoint::restore(STPTModel& model, AdamOptimizer* opt) const {
  for (auto& [name, p] : model.parameters()) {
    const auto* rec = find(name);
    if (!rec) throw std::runtime_error("checkpoint: missing parameter record '" + name + "'");
    if (rec->first != p.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': stored " +
                               shape_str(rec->first) + " vs model " + shape_str(p.shape()));
    }
    p.mutable_array() = rec->second;
    p.zero_grad();
  }
  if (opt) {
    for (auto& [name, st] : opt->states()) {
      const auto* m = find("adam.m." + name);
      const auto* v = find("adam.v." + name);
      const auto* t = find("adam.t." + name);
      if (!m || !v || !t) continue;  // plain parameter checkpoints carry no state
      if (m->second.size() != st.m.size() || v->second.size() != st.v.size()) {
        throw std::runtime_error("checkpoint: optimizer state size mismatch for '" + name + "'");
      }
      st.m = m->second;
      st.v = v->second;
      st.t = static_cast<std::int64_t>(t->second[0]);
    }
  }
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& checkpoints) {
  if (checkpoints.empty()) throw std::invalid_argument("average_checkpoints: no checkpoints");
  const Checkpoint& first = checkpoints.front();
  for (const auto& ck : checkpoints) {
    if (ck.config != first.config) {
      throw std::invalid_argument("average_checkpoints: config mismatch between inputs");
    }
  }
  Checkpoint out;
  out.config = first.config;
  out.update_counter = first.update_counter;
  for (const auto& [name, rec] : first.records) {
    if (name.rfind("adam.", 0) == 0) continue;  // optimizer state is dropped
    // Extended-precision accumulation keeps the K-identical case exact.
    std::vector<long double> acc(static_cast<std::size_t>(rec.second.size()));
    for (Eigen::Index i = 0; i < rec.second.size(); ++i) acc[static_cast<std::size_t>(i)] = rec.second[i];
    for (std::size_t k = 1; k < checkpoints.size(); ++k) {
      const auto* other = checkpoints[k].find(name);
      if (!other || other->first != rec.first) {
        throw std::invalid_argument("average_checkpoints: record mismatch for '" + name + "'");
      }
      for (Eigen::Index i = 0; i < other->second.size(); ++i) {
        acc[static_cast<std::size_t>(i)] += other->second[i];
      }
    }
    Arr mean(rec.second.size());
    const long double k = static_cast<long double>(checkpoints.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
      mean[i] = static_cast<double>(acc[static_cast<std::size_t>(i)] / k);
    }
    out.records.emplace_back(name, std::make_pair(rec.first, std::move(mean)));
  }
  return out;
}

}  // namespace stpt::model
