#include "qlw/dataset_io.hpp"

#include <cstring>
#include <fstream>

namespace qlw {

namespace {

constexpr char kMagic[4] = {'Q', 'L', 'W', '1'};

struct Writer : ByteWriter {
  // One padded section of `count` bits starting at `offset` within `bits`.
  void section(const BitVec& bits, size_t offset, size_t count) {
    uint8_t cur = 0;
    int fill = 0;
    for (size_t i = 0; i < count; ++i) {
      if (bits.get(offset + i)) cur |= static_cast<uint8_t>(1u << fill);
      if (++fill == 8) {
        out.push_back(cur);
        cur = 0;
        fill = 0;
      }
    }
    if (fill) out.push_back(cur);
  }
};

struct Reader : ByteReader {
  void section(BitVec& bits, size_t offset, size_t count, const char* what) {
    size_t bytes = (count + 7) / 8;
    need(bytes, what);
    for (size_t i = 0; i < count; ++i) {
      bits.set(offset + i, (in[pos + i / 8] >> (i % 8)) & 1);
    }
    pos += bytes;
  }
};

}  // namespace

std::vector<uint8_t> serialize(const Dataset& dataset) {
  const DatasetHeader& h = dataset.header;
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.u16(h.version);
  w.u16(h.d);
  w.u16(h.T);
  w.u8(static_cast<uint8_t>(h.basis));
  w.f64(h.noise.p_pauli);
  w.f64(h.noise.p_meas);
  w.f64(h.noise.p_loss);
  w.u64(h.seed);
  w.u64(h.shot_count);

  const int d = h.d, T = h.T;
  const size_t nd = static_cast<size_t>(d) * d;
  for (const ShotRecord& s : dataset.shots) {
    const size_t na = static_cast<size_t>(s.num_anc);
    for (int r = 0; r < T; ++r) w.section(s.ancilla_outcomes, r * na, na);
    for (int r = 0; r <= T; ++r) w.section(s.detectors, r * na, na);
    w.section(s.final_readout, 0, nd);
    for (int r = 0; r < T; ++r) w.section(s.loss_mask_truth, r * nd, nd);
    for (int r = 0; r < T; ++r) w.section(s.ancilla_loss_truth, r * na, na);
    w.section(s.logical_labels, 0, d);
    w.section(s.excluded_observables, 0, d);
  }
  return w.out;
}

Dataset deserialize(const std::vector<uint8_t>& bytes) {
  Reader r{{bytes}};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(FormatError::Kind::BadMagic, "bad magic, not a QLW1 dataset");
  r.pos = 4;

  Dataset ds;
  DatasetHeader& h = ds.header;
  h.version = r.u16("version");
  if (h.version != 1)
    throw FormatError(FormatError::Kind::BadVersion,
                      "unsupported dataset version " + std::to_string(h.version));
  h.d = r.u16("d");
  h.T = r.u16("T");
  h.basis = static_cast<Basis>(r.u8("basis"));
  h.noise.p_pauli = r.f64("p_pauli");
  h.noise.p_meas = r.f64("p_meas");
  h.noise.p_loss = r.f64("p_loss");
  h.seed = r.u64("seed");
  h.shot_count = r.u64("shot_count");

  const int d = h.d, T = h.T;
  const size_t nd = static_cast<size_t>(d) * d;
  const size_t na = nd - 1;
  ds.shots.reserve(h.shot_count);
  for (uint64_t i = 0; i < h.shot_count; ++i) {
    ShotRecord s;
    s.basis = h.basis;
    s.d = d;
    s.T = T;
    s.num_data = static_cast<int>(nd);
    s.num_anc = static_cast<int>(na);
    s.ancilla_outcomes = BitVec(static_cast<size_t>(T) * na);
    s.detectors = BitVec(static_cast<size_t>(T + 1) * na);
    s.final_readout = BitVec(nd);
    s.loss_mask_truth = BitVec(static_cast<size_t>(T) * nd);
    s.ancilla_loss_truth = BitVec(static_cast<size_t>(T) * na);
    s.logical_labels = BitVec(d);
    s.excluded_observables = BitVec(d);

    for (int rd = 0; rd < T; ++rd)
      r.section(s.ancilla_outcomes, rd * na, na, "ancilla outcomes");
    for (int rd = 0; rd <= T; ++rd) r.section(s.detectors, rd * na, na, "detectors");
    r.section(s.final_readout, 0, nd, "final readout");
    for (int rd = 0; rd < T; ++rd)
      r.section(s.loss_mask_truth, rd * nd, nd, "loss mask");
    for (int rd = 0; rd < T; ++rd)
      r.section(s.ancilla_loss_truth, rd * na, na, "ancilla loss mask");
    r.section(s.logical_labels, 0, d, "logical labels");
    r.section(s.excluded_observables, 0, d, "excluded observables");
    ds.shots.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::vector<uint8_t> bytes = serialize(dataset);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

uint64_t content_hash(const std::vector<uint8_t>& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t dataset_hash(const Dataset& dataset) { return content_hash(serialize(dataset)); }

}  // namespace qlw
