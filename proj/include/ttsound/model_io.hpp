#pragma once

// TTSB1 weights container.
//
//   "TTSB1"
//   u8 kind (0 cnn, 1 svm, 2 gmm), u8 task (0 surface, 1 spin)
//   u32 class count, then per class: i32 label id, u16 name length, name
//   u32 descriptor length, descriptor ("key=value\n" lines, sorted by key)
//   u32 tensor count, then per tensor:
//     u16 name length, name, u32 ndim, u32 dims[ndim], float32 LE data
//   u64 FNV-1a of every preceding byte
//
// All integers little-endian. Decoding validates every field and the exact
// tensor set implied by the descriptor; any mismatch is a FormatError.

#include "audio_io.hpp"
#include "classify.hpp"
#include "error.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ttsound {

inline constexpr char kModelMagic[5] = {'T', 'T', 'S', 'B', '1'};

namespace detail {

struct NamedTensor
{
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> data;
};

inline std::vector<NamedTensor> model_tensors(const ClassifierModel& m)
{
  std::vector<NamedTensor> t;
  auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  switch (m.kind)
  {
    case ModelKind::Cnn:
    {
      auto cnn = std::get<CnnModel>(m.model);
      for (auto& [name, values] : cnn.named_tensors())
      {
        NamedTensor nt{name, {}, *values};
        t.push_back(std::move(nt));
      }
      // Shapes follow the names.
      std::size_t i = 0;
      for (const auto& b : cnn.blocks)
      {
        t[i++].dims = {u32(b.outCh), u32(b.inCh), 3, 3};
        for (int k = 0; k < 5; ++k) t[i++].dims = {u32(b.outCh)};
      }
      t[i++].dims = {u32(cnn.num_classes()), u32(cnn.last_channels())};
      t[i++].dims = {u32(cnn.num_classes())};
      break;
    }
    case ModelKind::Svm:
    {
      const auto& svm = std::get<SvmModel>(m.model);
      NamedTensor w{"svm.weight", {u32(svm.num_classes()), u32(svm.dim)}, {}};
      for (const auto& row : svm.weights) w.data.insert(w.data.end(), row.begin(), row.end());
      t.push_back(std::move(w));
      t.push_back({"svm.bias", {u32(svm.num_classes())}, svm.bias});
      break;
    }
    case ModelKind::Gmm:
    {
      const auto& gmm = std::get<GmmModel>(m.model);
      for (std::size_t c = 0; c < gmm.num_classes(); ++c)
      {
        const auto& g = gmm.classes[c];
        const std::string p = "gmm.c" + std::to_string(c) + ".";
        t.push_back({p + "weight", {u32(g.components())}, g.weights});
        NamedTensor mean{p + "mean", {u32(g.components()), u32(g.dim())}, {}};
        NamedTensor var{p + "var", {u32(g.components()), u32(g.dim())}, {}};
        for (std::size_t k = 0; k < g.components(); ++k)
        {
          mean.data.insert(mean.data.end(), g.means[k].begin(), g.means[k].end());
          var.data.insert(var.data.end(), g.vars[k].begin(), g.vars[k].end());
        }
        t.push_back(std::move(mean));
        t.push_back(std::move(var));
      }
      t.push_back({"gmm.prior", {u32(gmm.num_classes())}, gmm.priors});
      break;
    }
  }
  return t;
}

inline std::map<std::string, std::string> model_descriptor(const ClassifierModel& m)
{
  auto d = m.meta;
  d["kind"] = std::string(to_string(m.kind));
  d["task"] = std::string(to_string(m.classes.task));
  switch (m.kind)
  {
    case ModelKind::Cnn: d["arch"] = std::get<CnnModel>(m.model).arch.descriptor(); break;
    case ModelKind::Svm: d["dim"] = std::to_string(std::get<SvmModel>(m.model).dim); break;
    case ModelKind::Gmm:
    {
      const auto& g = std::get<GmmModel>(m.model);
      d["dim"] = std::to_string(g.dim());
      d["components"] = std::to_string(g.classes.empty() ? 0 : g.classes.front().components());
      break;
    }
  }
  return d;
}

class Reader
{
public:
  explicit Reader(std::span<const std::uint8_t> b) : mBytes(b) {}

  const std::uint8_t* take(std::size_t n, const char* what)
  {
    if (mBytes.size() - mPos < n) throw FormatError(std::string("model file truncated in ") + what);
    const auto* p = mBytes.data() + mPos;
    mPos += n;
    return p;
  }
  std::uint8_t u8(const char* what) { return *take(1, what); }
  std::uint16_t u16(const char* what) { return le16(take(2, what)); }
  std::uint32_t u32(const char* what) { return le32(take(4, what)); }
  std::string str(std::size_t n, const char* what)
  {
    const auto* p = take(n, what);
    return {reinterpret_cast<const char*>(p), n};
  }
  bool done() const { return mPos == mBytes.size(); }

private:
  std::span<const std::uint8_t> mBytes;
  std::size_t mPos{0};
};

inline std::size_t parse_count(const std::map<std::string, std::string>& d, const std::string& key)
{
  auto it = d.find(key);
  if (it == d.end()) throw FormatError("descriptor lacks '" + key + "'");
  const auto& s = it->second;
  if (s.empty() || s.size() > 9 || s.find_first_not_of("0123456789") != std::string::npos)
    throw FormatError("descriptor '" + key + "' is not a count: '" + s + "'");
  return std::stoul(s);
}

inline std::vector<double> expect_tensor(std::map<std::string, NamedTensor>& tensors,
                                         const std::string& name,
                                         std::vector<std::uint32_t> dims)
{
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("missing tensor '" + name + "'");
  if (it->second.dims != dims) throw FormatError("tensor '" + name + "' has the wrong shape");
  auto data = std::move(it->second.data);
  tensors.erase(it);
  return data;
}

} // namespace detail

/// Tensors are stored as float32; trained models are already float32-exact,
/// so encoding them is lossless.
inline std::string encode_model(const ClassifierModel& m)
{
  using detail::put32;
  std::string out(kModelMagic, sizeof kModelMagic);
  out.push_back(static_cast<char>(m.kind));
  out.push_back(static_cast<char>(m.classes.task));
  put32(out, static_cast<std::uint32_t>(m.classes.size()));
  for (std::size_t i = 0; i < m.classes.size(); ++i)
  {
    put32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(m.classes.labels[i])));
    const auto name = m.classes.name(i);
    detail::put16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
  }
  std::string desc;
  for (const auto& [k, v] : detail::model_descriptor(m))
  {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ParameterError("model metadata '" + k + "' cannot be stored");
    desc += k + "=" + v + "\n";
  }
  put32(out, static_cast<std::uint32_t>(desc.size()));
  out += desc;

  const auto tensors = detail::model_tensors(m);
  put32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors)
  {
    detail::put16(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put32(out, d);
    for (double v : t.data) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  const auto sum = fnv1a(out);
  put32(out, static_cast<std::uint32_t>(sum));
  put32(out, static_cast<std::uint32_t>(sum >> 32));
  return out;
}

/// Parses a whole container; nothing is returned unless every check passes.
inline ClassifierModel decode_model(std::span<const std::uint8_t> bytes)
{
  if (bytes.size() < sizeof kModelMagic || std::memcmp(bytes.data(), kModelMagic, sizeof kModelMagic) != 0)
    throw FormatError("not a TTSB1 model file (bad magic)");
  if (bytes.size() < sizeof kModelMagic + 8) throw FormatError("model file truncated");
  const auto body = bytes.first(bytes.size() - 8);
  const std::uint64_t stored = detail::le32(body.data() + body.size()) |
                               std::uint64_t{detail::le32(body.data() + body.size() + 4)} << 32;
  if (fnv1a({reinterpret_cast<const char*>(body.data()), body.size()}) != stored)
    throw FormatError("model file is truncated or corrupt (checksum mismatch)");

  detail::Reader r(body);
  r.take(sizeof kModelMagic, "magic");

  ClassifierModel m;
  const auto kind = r.u8("header");
  if (kind > 2) throw FormatError("unknown model kind " + std::to_string(kind));
  m.kind = static_cast<ModelKind>(kind);
  const auto task = r.u8("header");
  if (task > 1) throw FormatError("unknown task " + std::to_string(task));
  m.classes.task = static_cast<Task>(task);

  const auto nClasses = r.u32("class table");
  if (nClasses < 1 || nClasses > static_cast<std::uint32_t>(num_classes(m.classes.task)))
    throw FormatError("class count " + std::to_string(nClasses) + " is invalid for the task");
  for (std::uint32_t i = 0; i < nClasses; ++i)
  {
    const auto label = static_cast<std::int32_t>(r.u32("class table"));
    const auto name = r.str(r.u16("class table"), "class table");
    if (label < 0 || label >= num_classes(m.classes.task) ||
        label_name(m.classes.task, label) != name)
      throw FormatError("class table entry '" + name + "' does not match its label id");
    if (!m.classes.labels.empty() && label <= m.classes.labels.back())
      throw FormatError("class table is not strictly increasing");
    m.classes.labels.push_back(label);
  }

  std::map<std::string, std::string> desc;
  {
    const auto text = r.str(r.u32("descriptor"), "descriptor");
    std::size_t pos = 0;
    while (pos < text.size())
    {
      const auto nl = text.find('\n', pos);
      if (nl == std::string::npos) throw FormatError("descriptor line is not terminated");
      const auto line = text.substr(pos, nl - pos);
      const auto eq = line.find('=');
      if (eq == std::string::npos || eq == 0) throw FormatError("bad descriptor line '" + line + "'");
      if (!desc.emplace(line.substr(0, eq), line.substr(eq + 1)).second)
        throw FormatError("duplicate descriptor key '" + line.substr(0, eq) + "'");
      pos = nl + 1;
    }
  }
  if (desc["kind"] != to_string(m.kind)) throw FormatError("descriptor kind disagrees with header");
  if (desc["task"] != to_string(m.classes.task)) throw FormatError("descriptor task disagrees with header");

  std::map<std::string, detail::NamedTensor> tensors;
  const auto nTensors = r.u32("tensor table");
  for (std::uint32_t i = 0; i < nTensors; ++i)
  {
    detail::NamedTensor t;
    t.name = r.str(r.u16("tensor name"), "tensor name");
    const auto ndim = r.u32("tensor shape");
    if (ndim < 1 || ndim > 4) throw FormatError("tensor '" + t.name + "' has rank " + std::to_string(ndim));
    std::uint64_t count = 1;
    for (std::uint32_t k = 0; k < ndim; ++k)
    {
      t.dims.push_back(r.u32("tensor shape"));
      count *= t.dims.back();
      if (count > (std::uint64_t{1} << 28)) throw FormatError("tensor '" + t.name + "' is implausibly large");
    }
    const auto* p = r.take(static_cast<std::size_t>(count) * 4, "tensor data");
    t.data.resize(static_cast<std::size_t>(count));
    for (std::size_t k = 0; k < t.data.size(); ++k)
    {
      const float f = std::bit_cast<float>(detail::le32(p + 4 * k));
      if (!std::isfinite(f)) throw FormatError("tensor '" + t.name + "' holds a non-finite value");
      t.data[k] = static_cast<double>(f);
    }
    const auto name = t.name;
    if (!tensors.emplace(name, std::move(t)).second) throw FormatError("duplicate tensor '" + name + "'");
  }
  if (!r.done()) throw FormatError("trailing bytes after the last tensor");

  const std::size_t nc = m.classes.size();
  auto u32 = [](std::size_t v) { return static_cast<std::uint32_t>(v); };
  switch (m.kind)
  {
    case ModelKind::Cnn:
    {
      const auto arch = CnnArchitecture::parse(desc["arch"]);
      if (arch.nClasses != nc) throw FormatError("architecture class count disagrees with the class table");
      CnnModel cnn(arch);
      for (auto& b : cnn.blocks)
      {
        const auto i = static_cast<std::size_t>(&b - cnn.blocks.data());
        const std::string p = "block" + std::to_string(i + 1) + ".";
        b.weight = detail::expect_tensor(tensors, p + "conv.weight", {u32(b.outCh), u32(b.inCh), 3, 3});
        b.bias = detail::expect_tensor(tensors, p + "conv.bias", {u32(b.outCh)});
        b.gamma = detail::expect_tensor(tensors, p + "bn.gamma", {u32(b.outCh)});
        b.beta = detail::expect_tensor(tensors, p + "bn.beta", {u32(b.outCh)});
        b.runningMean = detail::expect_tensor(tensors, p + "bn.running_mean", {u32(b.outCh)});
        b.runningVar = detail::expect_tensor(tensors, p + "bn.running_var", {u32(b.outCh)});
        for (double v : b.runningVar)
          if (v < 0.0) throw FormatError("negative running variance in block " + std::to_string(i + 1));
      }
      cnn.denseW = detail::expect_tensor(tensors, "dense.weight", {u32(nc), u32(cnn.last_channels())});
      cnn.denseB = detail::expect_tensor(tensors, "dense.bias", {u32(nc)});
      m.model = std::move(cnn);
      break;
    }
    case ModelKind::Svm:
    {
      if (nc < 2) throw FormatError("svm model needs at least 2 classes");
      SvmModel svm;
      svm.dim = detail::parse_count(desc, "dim");
      if (svm.dim == 0) throw FormatError("svm dimension is zero");
      const auto w = detail::expect_tensor(tensors, "svm.weight", {u32(nc), u32(svm.dim)});
      for (std::size_t c = 0; c < nc; ++c)
        svm.weights.emplace_back(w.begin() + static_cast<std::ptrdiff_t>(c * svm.dim),
                                 w.begin() + static_cast<std::ptrdiff_t>((c + 1) * svm.dim));
      svm.bias = detail::expect_tensor(tensors, "svm.bias", {u32(nc)});
      m.model = std::move(svm);
      break;
    }
    case ModelKind::Gmm:
    {
      const auto dim = detail::parse_count(desc, "dim");
      const auto k = detail::parse_count(desc, "components");
      if (dim == 0 || k == 0) throw FormatError("gmm shape is empty");
      GmmModel gmm;
      for (std::size_t c = 0; c < nc; ++c)
      {
        const std::string p = "gmm.c" + std::to_string(c) + ".";
        DiagGmm g;
        g.weights = detail::expect_tensor(tensors, p + "weight", {u32(k)});
        const auto mean = detail::expect_tensor(tensors, p + "mean", {u32(k), u32(dim)});
        const auto var = detail::expect_tensor(tensors, p + "var", {u32(k), u32(dim)});
        for (std::size_t j = 0; j < k; ++j)
        {
          g.means.emplace_back(mean.begin() + static_cast<std::ptrdiff_t>(j * dim),
                               mean.begin() + static_cast<std::ptrdiff_t>((j + 1) * dim));
          g.vars.emplace_back(var.begin() + static_cast<std::ptrdiff_t>(j * dim),
                              var.begin() + static_cast<std::ptrdiff_t>((j + 1) * dim));
        }
        for (double w : g.weights)
          if (w < 0.0) throw FormatError("negative mixture weight in class " + std::to_string(c));
        for (const auto& row : g.vars)
          for (double v : row)
            if (!(v > 0.0)) throw FormatError("non-positive variance in class " + std::to_string(c));
        gmm.classes.push_back(std::move(g));
      }
      gmm.priors = detail::expect_tensor(tensors, "gmm.prior", {u32(nc)});
      for (double v : gmm.priors)
        if (!(v > 0.0)) throw FormatError("non-positive class prior");
      m.model = std::move(gmm);
      break;
    }
  }
  if (!tensors.empty()) throw FormatError("unexpected tensor '" + tensors.begin()->first + "'");

  for (const char* key : {"kind", "task", "arch", "dim", "components"}) desc.erase(key);
  m.meta = std::move(desc);
  return m;
}

inline void save_model(const ClassifierModel& m, const std::filesystem::path& path)
{
  write_file(path, encode_model(m));
}

inline ClassifierModel load_model(const std::filesystem::path& path)
{
  const auto bytes = detail::read_file(path);
  try
  {
    return decode_model(bytes);
  }
  catch (const FormatError& e)
  {
    throw FormatError(path.string() + ": " + e.what());
  }
}

} // namespace ttsound
