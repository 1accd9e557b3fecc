#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clr/adapter.hpp"
#include "clr/backbone.hpp"

// Binary checkpoint container:
//
//   magic "CLRK" | version u16 | entry_count u32
//   per entry: name_len u16 | name bytes | dtype u8 | ndim u8 | dims u32...
//              | payload (little-endian)
//   crc32 u32 over every preceding byte
//
// dtype 0 is f32 tensor data; dtype 1 is a raw u8 byte string (used for a
// single JSON metadata entry). All integers little-endian. The CRC is
// verified before any entry is parsed, so a corrupt file never yields a
// partial load.

namespace clr {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::uint8_t dtype = 0;  // 0 = f32, 1 = u8
  std::vector<int> dims;
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;

  std::int64_t count() const {
    std::int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t n,
                                std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

inline void push_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void push_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void push_f32(std::vector<std::uint8_t>& b, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  push_u32(b, v);
}

struct ByteReader {
  const std::uint8_t* p;
  std::size_t n, at = 0;
  void need(std::size_t k, const char* what) {
    if (at + k > n) throw FormatError(std::string("checkpoint truncated reading ") + what);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(p[at] | (p[at + 1] << 8));
    at += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[at + static_cast<std::size_t>(i)]) << (8 * i);
    at += 4;
    return v;
  }
  std::uint8_t u8v(const char* what) {
    need(1, what);
    return p[at++];
  }
};

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<CheckpointEntry>& entries) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), {'C', 'L', 'R', 'K'});
  detail::push_u16(buf, kCheckpointVersion);
  detail::push_u32(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() > 0xFFFF)
      throw FormatError("checkpoint entry name length unsupported: " + e.name);
    if (e.dims.size() > 0xFF) throw FormatError("checkpoint entry has too many dims");
    detail::push_u16(buf, static_cast<std::uint16_t>(e.name.size()));
    buf.insert(buf.end(), e.name.begin(), e.name.end());
    buf.push_back(e.dtype);
    buf.push_back(static_cast<std::uint8_t>(e.dims.size()));
    for (int d : e.dims) {
      if (d < 0) throw FormatError("negative dim in checkpoint entry " + e.name);
      detail::push_u32(buf, static_cast<std::uint32_t>(d));
    }
    if (e.dtype == 0) {
      if (static_cast<std::int64_t>(e.f32.size()) != e.count())
        throw FormatError("payload size mismatch in checkpoint entry " + e.name);
      for (float f : e.f32) detail::push_f32(buf, f);
    } else if (e.dtype == 1) {
      if (static_cast<std::int64_t>(e.u8.size()) != e.count())
        throw FormatError("payload size mismatch in checkpoint entry " + e.name);
      buf.insert(buf.end(), e.u8.begin(), e.u8.end());
    } else {
      throw FormatError("unsupported dtype tag in checkpoint entry " + e.name);
    }
  }
  detail::push_u32(buf, detail::crc32_ieee(buf.data(), buf.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write checkpoint: " + tmp);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f.flush()) throw FormatError("checkpoint write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 14) throw FormatError("checkpoint too small: " + path);
  if (std::memcmp(buf.data(), "CLRK", 4) != 0)
    throw FormatError("bad checkpoint magic in " + path);

  const std::uint32_t stored_crc = std::uint32_t(buf[buf.size() - 4]) |
                                   (std::uint32_t(buf[buf.size() - 3]) << 8) |
                                   (std::uint32_t(buf[buf.size() - 2]) << 16) |
                                   (std::uint32_t(buf[buf.size() - 1]) << 24);
  if (detail::crc32_ieee(buf.data(), buf.size() - 4) != stored_crc)
    throw FormatError("checkpoint CRC mismatch in " + path);

  detail::ByteReader r{buf.data(), buf.size() - 4};
  r.at = 4;
  const std::uint16_t version = r.u16("version");
  if (version > kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) +
                      " unsupported; this build reads up to version " +
                      std::to_string(kCheckpointVersion));
  const std::uint32_t count = r.u32("entry count");
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const std::uint16_t name_len = r.u16("name length");
    r.need(name_len, "name");
    e.name.assign(reinterpret_cast<const char*>(r.p + r.at), name_len);
    r.at += name_len;
    e.dtype = r.u8v("dtype");
    if (e.dtype > 1)
      throw FormatError("unsupported dtype tag " + std::to_string(int(e.dtype)) +
                        " in checkpoint entry " + e.name);
    const std::uint8_t ndim = r.u8v("ndim");
    std::int64_t n = 1;
    for (int d = 0; d < ndim; ++d) {
      const std::uint32_t dim = r.u32("dim");
      e.dims.push_back(static_cast<int>(dim));
      n *= dim;
      if (n > (std::int64_t(1) << 33)) throw FormatError("oversized checkpoint entry " + e.name);
    }
    if (e.dtype == 0) {
      r.need(static_cast<std::size_t>(n) * 4, "f32 payload");
      e.f32.resize(static_cast<std::size_t>(n));
      for (std::int64_t k = 0; k < n; ++k) {
        const std::uint32_t v = r.u32("f32 value");
        float fl;
        std::memcpy(&fl, &v, 4);
        e.f32[static_cast<std::size_t>(k)] = fl;
      }
    } else {
      r.need(static_cast<std::size_t>(n), "u8 payload");
      e.u8.assign(r.p + r.at, r.p + r.at + n);
      r.at += static_cast<std::size_t>(n);
    }
    entries.push_back(std::move(e));
  }
  if (r.at != r.n) throw FormatError("trailing bytes in checkpoint " + path);
  return entries;
}

// --- tensor/json bridging ------------------------------------------------------

inline CheckpointEntry entry_from_tensor(const std::string& name, const TensorPtr& t) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = 0;
  e.dims = t->shape;
  e.f32 = t->data;
  return e;
}

inline TensorPtr tensor_from_entry(const CheckpointEntry& e, bool requires_grad) {
  if (e.dtype != 0) throw FormatError("entry " + e.name + " is not tensor data");
  auto t = make_tensor<float>(e.dims, requires_grad);
  t->data = e.f32;
  return t;
}

inline CheckpointEntry entry_from_json(const std::string& name, const nlohmann::json& j) {
  CheckpointEntry e;
  e.name = name;
  e.dtype = 1;
  const std::string s = j.dump();
  e.dims = {static_cast<int>(s.size())};
  e.u8.assign(s.begin(), s.end());
  return e;
}

inline nlohmann::json json_from_entry(const CheckpointEntry& e) {
  if (e.dtype != 1) throw FormatError("entry " + e.name + " is not metadata");
  try {
    return nlohmann::json::parse(std::string(e.u8.begin(), e.u8.end()));
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError("bad metadata json in entry " + e.name + ": " + ex.what());
  }
}

// --- backbone persistence --------------------------------------------------------

inline void save_backbone(const std::string& path, const BackboneState& s) {
  std::vector<CheckpointEntry> entries;
  nlohmann::json meta;
  meta["kind"] = "backbone";
  meta["arch"] = arch_to_json(s.arch);
  meta["frozen"] = s.frozen;
  meta["provenance"] = {{"origin", s.provenance.origin},
                        {"dataset", s.provenance.dataset},
                        {"epochs", s.provenance.epochs},
                        {"final_train_acc", s.provenance.final_train_acc},
                        {"final_val_acc", s.provenance.final_val_acc},
                        {"seed", s.provenance.seed}};
  nlohmann::json seen = nlohmann::json::object();
  for (const auto& [k, v] : s.bn_seen) seen[k] = v;
  meta["bn_seen"] = seen;
  entries.push_back(entry_from_json("meta", meta));
  for (const auto& [name, t] : s.params) entries.push_back(entry_from_tensor(name, t));
  save_checkpoint(path, entries);
}

inline BackboneState load_backbone(const std::string& path) {
  const auto entries = load_checkpoint(path);
  if (entries.empty() || entries.front().name != "meta")
    throw FormatError("checkpoint lacks leading meta entry: " + path);
  const auto meta = json_from_entry(entries.front());
  BackboneState s;
  try {
    if (meta.at("kind").get<std::string>() != "backbone")
      throw FormatError("checkpoint is not a backbone: " + path);
    s.arch = arch_from_json(meta.at("arch"));
    s.frozen = meta.at("frozen").get<bool>();
    const auto& p = meta.at("provenance");
    s.provenance.origin = p.at("origin").get<std::string>();
    s.provenance.dataset = p.at("dataset").get<std::string>();
    s.provenance.epochs = p.at("epochs").get<int>();
    s.provenance.final_train_acc = p.at("final_train_acc").get<double>();
    s.provenance.final_val_acc = p.at("final_val_acc").get<double>();
    s.provenance.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& [k, v] : meta.at("bn_seen").items())
      s.bn_seen[k] = v.get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad backbone metadata: ") + e.what());
  }

  // Expected parameter inventory, so missing/renamed/extra entries are
  // detected instead of silently building a half-initialized network.
  BackboneState skeleton = build_network(s.arch, 0);
  for (std::size_t i = 1; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto it = skeleton.params.find(e.name);
    if (it == skeleton.params.end())
      throw FormatError("unexpected tensor in backbone checkpoint: " + e.name);
    if (it->second->shape != e.dims)
      throw FormatError("shape mismatch for " + e.name + " in " + path);
    const bool is_buffer = e.name.ends_with(".bn.rm") || e.name.ends_with(".bn.rv");
    s.params[e.name] = tensor_from_entry(e, !s.frozen && !is_buffer);
  }
  for (const auto& [name, t] : skeleton.params)
    if (!s.params.count(name))
      throw FormatError("backbone checkpoint is missing tensor " + name);
  for (const auto& [site, n] : skeleton.bn_seen)
    if (!s.bn_seen.count(site))
      throw FormatError("backbone checkpoint is missing norm counter for " + site);
  if (s.frozen) freeze(s);
  return s;
}

// --- adapter persistence ----------------------------------------------------------

inline void save_adapter(const std::string& path, const TaskAdapter& a) {
  std::vector<CheckpointEntry> entries;
  nlohmann::json meta;
  meta["kind"] = "adapter";
  meta["task_id"] = a.task_id;
  meta["variant"] = variant_name(a.variant);
  meta["num_classes"] = a.num_classes;
  meta["arch"] = arch_to_json(a.arch);
  nlohmann::json log = nlohmann::json::array();
  for (const auto& row : a.training_log)
    log.push_back({{"epoch", row.epoch},
                   {"loss", row.loss},
                   {"train_acc", row.train_acc},
                   {"val_acc", row.val_acc}});
  meta["training_log"] = log;
  entries.push_back(entry_from_json("meta", meta));
  for (const auto& [site, layer] : a.layers) {
    entries.push_back(entry_from_tensor("clr." + site + ".k", layer.kernels));
    if (layer.blend) entries.push_back(entry_from_tensor("clr." + site + ".a", layer.blend));
  }
  for (const auto& [site, gb] : a.norm_affine) {
    entries.push_back(entry_from_tensor("affine." + site + ".g", gb.first));
    entries.push_back(entry_from_tensor("affine." + site + ".b", gb.second));
  }
  entries.push_back(entry_from_tensor("head.w", a.head_w));
  entries.push_back(entry_from_tensor("head.b", a.head_b));
  save_checkpoint(path, entries);
}

inline TaskAdapter load_adapter(const std::string& path) {
  const auto entries = load_checkpoint(path);
  if (entries.empty() || entries.front().name != "meta")
    throw FormatError("checkpoint lacks leading meta entry: " + path);
  const auto meta = json_from_entry(entries.front());
  TaskAdapter a;
  try {
    if (meta.at("kind").get<std::string>() != "adapter")
      throw FormatError("checkpoint is not an adapter: " + path);
    a.task_id = meta.at("task_id").get<int>();
    a.variant = variant_from_name(meta.at("variant").get<std::string>());
    a.num_classes = meta.at("num_classes").get<int>();
    a.arch = arch_from_json(meta.at("arch"));
    for (const auto& row : meta.at("training_log")) {
      EpochLogRow r;
      r.epoch = row.at("epoch").get<int>();
      r.loss = row.at("loss").get<double>();
      r.train_acc = row.at("train_acc").get<double>();
      r.val_acc = row.at("val_acc").get<double>();
      a.training_log.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad adapter metadata: ") + e.what());
  }

  for (std::size_t i = 1; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.name == "head.w") {
      a.head_w = tensor_from_entry(e, true);
    } else if (e.name == "head.b") {
      a.head_b = tensor_from_entry(e, true);
    } else if (e.name.starts_with("clr.") && e.name.ends_with(".k")) {
      const std::string site = e.name.substr(4, e.name.size() - 6);
      a.layers[site].attached_to = site;
      a.layers[site].kernels = tensor_from_entry(e, true);
    } else if (e.name.starts_with("clr.") && e.name.ends_with(".a")) {
      const std::string site = e.name.substr(4, e.name.size() - 6);
      a.layers[site].attached_to = site;
      a.layers[site].blend = tensor_from_entry(e, true);
    } else if (e.name.starts_with("affine.") && e.name.ends_with(".g")) {
      a.norm_affine[e.name.substr(7, e.name.size() - 9)].first = tensor_from_entry(e, true);
    } else if (e.name.starts_with("affine.") && e.name.ends_with(".b")) {
      a.norm_affine[e.name.substr(7, e.name.size() - 9)].second = tensor_from_entry(e, true);
    } else {
      throw FormatError("unexpected tensor in adapter checkpoint: " + e.name);
    }
  }
  if (!a.head_w || !a.head_b) throw FormatError("adapter checkpoint lacks a head: " + path);

  // The stored attachment set must be exactly what the variant dictates.
  std::size_t expected = 0;
  for (const auto& site : validate(a.arch)) {
    const int k = attachment_kernel(a.variant, site.spec.k);
    if (k == 0) continue;
    ++expected;
    const auto it = a.layers.find(site.path);
    if (it == a.layers.end())
      throw FormatError("adapter checkpoint is missing CLR kernels for " + site.path);
    if (!it->second.kernels || it->second.kernels->ndim() != 4 ||
        it->second.kernels->dim(0) != site.spec.out_ch || it->second.kernels->dim(2) != k)
      throw FormatError("adapter kernels malformed for " + site.path);
    if ((a.variant == ClrVariant::Mixed) != bool(it->second.blend))
      throw FormatError("adapter blend weights inconsistent with variant at " + site.path);
  }
  if (expected != a.layers.size())
    throw FormatError("adapter checkpoint carries extra CLR layers");
  for (const auto& [site, gb] : a.norm_affine)
    if (!gb.first || !gb.second)
      throw FormatError("adapter norm affine incomplete for " + site);
  return a;
}

}  // namespace clr
