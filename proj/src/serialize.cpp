#include "henet/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace henet {

namespace {

constexpr char kMagic[8] = {'H', 'E', 'N', 'E', 'T', 'M', 'D', 'L'};

void put_u8(std::vector<std::uint8_t>& b, std::uint8_t v) { b.push_back(v); }

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& b, float v) { put_u32(b, std::bit_cast<std::uint32_t>(v)); }

void put_string(std::vector<std::uint8_t>& b, const std::string& s) {
  put_u32(b, static_cast<std::uint32_t>(s.size()));
  b.insert(b.end(), s.begin(), s.end());
}

struct Reader {
  const std::uint8_t* p;
  const std::uint8_t* end;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n) throw IoError("model file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return *p++;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

void put_config(std::vector<std::uint8_t>& b, const NetworkConfig& cfg) {
  put_u32(b, static_cast<std::uint32_t>(cfg.input_size));
  put_u32(b, static_cast<std::uint32_t>(cfg.input_channels));
  put_u32(b, static_cast<std::uint32_t>(cfg.stem_channels));
  put_u32(b, static_cast<std::uint32_t>(cfg.stage_channels.size()));
  for (Index c : cfg.stage_channels) put_u32(b, static_cast<std::uint32_t>(c));
  put_u32(b, static_cast<std::uint32_t>(cfg.repeat));
  put_u32(b, static_cast<std::uint32_t>(cfg.final_channels));
  put_u32(b, static_cast<std::uint32_t>(cfg.num_classes));
  put_u8(b, cfg.stage3_doubles ? 1 : 0);
}

NetworkConfig read_config(Reader& r) {
  NetworkConfig cfg;
  cfg.input_size = r.u32();
  cfg.input_channels = r.u32();
  cfg.stem_channels = r.u32();
  const std::uint32_t nstages = r.u32();
  cfg.stage_channels.clear();
  for (std::uint32_t i = 0; i < nstages; ++i) cfg.stage_channels.push_back(r.u32());
  cfg.repeat = r.u32();
  cfg.final_channels = r.u32();
  cfg.num_classes = r.u32();
  cfg.stage3_doubles = r.u8() != 0;
  return cfg;
}

}  // namespace

void save_model(const ModelGraph<float>& g, const std::string& path) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 8);
  put_u32(buf, kModelFormatVersion);
  put_u8(buf, g.def.arch == ArchKind::HENet ? 0 : 1);
  put_config(buf, g.def.cfg);
  put_u8(buf, 3);
  for (float m : g.input_means) put_f32(buf, m);

  // parameter registries walk a non-const graph; serialization only reads
  auto& mutable_g = const_cast<ModelGraph<float>&>(g);
  auto refs = trainable_parameters(mutable_g);
  auto bufs = state_buffers(mutable_g);
  refs.insert(refs.end(), bufs.begin(), bufs.end());

  put_u32(buf, static_cast<std::uint32_t>(refs.size()));
  for (const auto& ref : refs) {
    put_string(buf, ref.name);
    put_u64(buf, ref.size);
    for (std::size_t i = 0; i < ref.size; ++i) put_f32(buf, ref.data[i]);
  }

  put_u64(buf, fnv1a(buf.data() + 8, buf.size() - 8));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model file: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing model file: " + path);
}

ModelGraph<float> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
  if (!in) throw IoError("failed reading model file: " + path);

  if (buf.size() < 24 || std::memcmp(buf.data(), kMagic, 8) != 0)
    throw IoError("not a model file (bad magic): " + path);
  Reader r{buf.data() + 8, buf.data() + buf.size() - 8};
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw IoError("unsupported model format version " + std::to_string(version) +
                  " (expected " + std::to_string(kModelFormatVersion) + ")");
  const std::uint64_t stored = [&] {
    Reader tail{buf.data() + buf.size() - 8, buf.data() + buf.size()};
    return tail.u64();
  }();
  if (fnv1a(buf.data() + 8, buf.size() - 16) != stored)
    throw IoError("model file checksum mismatch: " + path);

  const std::uint8_t arch = r.u8();
  const NetworkConfig cfg = read_config(r);

  ModelGraph<float> g = materialize<float>(arch == 0 ? build_henet_def(cfg)
                                                     : build_shufflenet_def(cfg));
  const std::uint8_t mean_count = r.u8();
  if (mean_count != 3) throw IoError("unexpected input mean count");
  for (int i = 0; i < 3; ++i) g.input_means[static_cast<std::size_t>(i)] = r.f32();

  auto refs = trainable_parameters(g);
  auto bufs = state_buffers(g);
  refs.insert(refs.end(), bufs.begin(), bufs.end());
  std::map<std::string, ParamRef<float>*> by_name;
  for (auto& ref : refs) by_name[ref.name] = &ref;

  const std::uint32_t blob_count = r.u32();
  if (blob_count != refs.size())
    throw IoError("model file has " + std::to_string(blob_count) + " blobs, graph expects " +
                  std::to_string(refs.size()));
  for (std::uint32_t b = 0; b < blob_count; ++b) {
    const std::string name = r.str();
    const std::uint64_t count = r.u64();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("unknown parameter blob '" + name + "'");
    ParamRef<float>* ref = it->second;
    if (ref == nullptr) throw IoError("duplicate parameter blob '" + name + "'");
    if (count != ref->size)
      throw IoError("blob '" + name + "' has " + std::to_string(count) +
                    " values, graph expects " + std::to_string(ref->size));
    for (std::uint64_t i = 0; i < count; ++i) ref->data[i] = r.f32();
    it->second = nullptr;  // mark filled
  }
  return g;
}

}  // namespace henet
