#include "musedit/checkpoint.hpp"

#include <cstdio>
#include <cstring>

namespace musedit {

namespace {
constexpr char kMagic[8] = {'M', 'E', 'C', 'K', 'P', 'T', '0', '1'};
}

const Mat* Checkpoint::find_tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

void Checkpoint::save(const std::string& path) const {
  ME_CHECK(meta.contains("format_version"), "checkpoint: meta missing format_version");
  json header = meta;
  json dir = json::array();
  uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    dir.push_back({{"name", name},
                   {"rows", m.rows()},
                   {"cols", m.cols()},
                   {"offset", offset}});
    offset += static_cast<uint64_t>(m.size()) * sizeof(double);
  }
  header["tensors"] = dir;
  const std::string hs = header.dump();

  FILE* f = fopen(path.c_str(), "wb");
  ME_CHECK(f != nullptr, "checkpoint: cannot open " + path + " for writing");
  fwrite(kMagic, 1, 8, f);
  uint64_t hlen = hs.size();
  fwrite(&hlen, sizeof(hlen), 1, f);
  fwrite(hs.data(), 1, hs.size(), f);
  for (const auto& [name, m] : tensors) {
    // column-major contiguous, matching Eigen's default layout
    fwrite(m.data(), sizeof(double), static_cast<size_t>(m.size()), f);
  }
  bool ok = fflush(f) == 0;
  fclose(f);
  ME_CHECK(ok, "checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  FILE* f = fopen(path.c_str(), "rb");
  ME_CHECK(f != nullptr, "checkpoint: cannot open " + path);
  char magic[8];
  ME_CHECK(fread(magic, 1, 8, f) == 8 && memcmp(magic, kMagic, 8) == 0,
           "checkpoint: bad magic in " + path);
  uint64_t hlen = 0;
  ME_CHECK(fread(&hlen, sizeof(hlen), 1, f) == 1, "checkpoint: truncated header");
  std::string hs(hlen, '\0');
  ME_CHECK(fread(hs.data(), 1, hlen, f) == hlen, "checkpoint: truncated header json");

  Checkpoint ck;
  ck.meta = json::parse(hs);
  ME_CHECK(ck.meta.contains("format_version"), "checkpoint: missing format_version");
  json dir = ck.meta["tensors"];
  ck.meta.erase("tensors");
  for (const auto& e : dir) {
    Mat m(e["rows"].get<Eigen::Index>(), e["cols"].get<Eigen::Index>());
    ME_CHECK(fread(m.data(), sizeof(double), static_cast<size_t>(m.size()), f) ==
                 static_cast<size_t>(m.size()),
             "checkpoint: truncated tensor " + e["name"].get<std::string>());
    ck.tensors.emplace_back(e["name"].get<std::string>(), std::move(m));
  }
  fclose(f);
  return ck;
}

void Checkpoint::put_params(const nn::ParamStore& ps, const std::string& prefix) {
  for (int i = 0; i < ps.count(); ++i) add_tensor(prefix + ps.name(i), ps.value(i));
}

void Checkpoint::get_params(nn::ParamStore& ps, const std::string& prefix) const {
  for (int i = 0; i < ps.count(); ++i) {
    const Mat* m = find_tensor(prefix + ps.name(i));
    ME_CHECK(m != nullptr, "checkpoint: missing tensor " + prefix + ps.name(i));
    ME_CHECK(m->rows() == ps.value(i).rows() && m->cols() == ps.value(i).cols(),
             "checkpoint: shape mismatch for " + prefix + ps.name(i));
    ps.value(i) = *m;
  }
}

std::string config_digest(const json& j) { return hex64(fnv1a64(j.dump())); }

}  // namespace musedit
