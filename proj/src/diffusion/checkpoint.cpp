// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/diffusion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "diffq/errors.hpp"

namespace diffq::diffusion {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  if (const Tensor* t = find(name)) return *t;
  throw ArchitectureMismatch("checkpoint has no tensor '" + name + "'");
}

const std::string& Checkpoint::attr(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ArchitectureMismatch("checkpoint has no attribute '" + key + "'");
  return it->second;
}

void Checkpoint::put(std::string name, Tensor value) {
  for (auto& [n, t] : tensors)
    if (n == name) {
      t = std::move(value);
      return;
    }
  tensors.emplace_back(std::move(name), std::move(value));
}

namespace {

void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos)
    throw IoError(std::string("checkpoint ") + what + " must be a non-empty token without whitespace: '" + s + "'");
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream head;
  head << "diffq-checkpoint 1\n";
  for (const auto& [k, v] : ckpt.attrs) {
    check_token(k, "attribute key");
    if (v.find('\n') != std::string::npos) throw IoError("checkpoint attribute '" + k + "' contains a newline");
    head << "attr " << k << ' ' << v << '\n';
  }
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    check_token(name, "tensor name");
    const std::size_t nbytes = t.size() * sizeof(double);
    head << "tensor " << name << " f64 " << t.rank();
    for (auto d : t.shape()) head << ' ' << d;
    head << ' ' << offset << ' ' << nbytes << '\n';
    offset += nbytes;
  }
  head << "payload " << offset << '\n';
  std::string out = head.str();
  const std::size_t start = out.size();
  out.resize(start + offset);
  char* p = out.data() + start;
  for (const auto& [name, t] : ckpt.tensors) {
    const auto d = t.data();
    std::memcpy(p, d.data(), d.size_bytes());
    p += d.size_bytes();
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Checkpoint ck;
  std::size_t pos = 0;
  auto next_line = [&]() {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw IoError("checkpoint manifest truncated");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != "diffq-checkpoint 1") throw IoError("not a diffq checkpoint (bad magic line)");

  struct Entry {
    std::string name;
    numerics::Shape shape;
    std::size_t offset, nbytes;
  };
  std::vector<Entry> entries;
  std::size_t payload = 0;
  for (;;) {
    const std::string line = next_line();
    std::istringstream in(line);
    std::string kind;
    in >> kind;
    if (kind == "attr") {
      std::string key;
      in >> key;
      std::string value;
      if (in.peek() == ' ') in.get();
      std::getline(in, value);
      ck.attrs[key] = value;
    } else if (kind == "tensor") {
      Entry e;
      std::string dtype;
      std::size_t rank = 0;
      in >> e.name >> dtype >> rank;
      if (dtype != "f64") throw IoError("checkpoint tensor '" + e.name + "' has unsupported dtype " + dtype);
      e.shape.resize(rank);
      for (auto& d : e.shape) in >> d;
      in >> e.offset >> e.nbytes;
      if (!in) throw IoError("malformed checkpoint line: " + line);
      if (numerics::shape_size(e.shape) * sizeof(double) != e.nbytes)
        throw IoError("checkpoint tensor '" + e.name + "' byte count disagrees with its shape");
      entries.push_back(std::move(e));
    } else if (kind == "payload") {
      in >> payload;
      if (!in) throw IoError("malformed checkpoint payload line");
      break;
    } else {
      throw IoError("unknown checkpoint manifest line: " + line);
    }
  }
  if (bytes.size() - pos != payload) throw IoError("checkpoint payload size mismatch");
  for (const auto& e : entries) {
    if (e.offset + e.nbytes > payload) throw IoError("checkpoint tensor '" + e.name + "' overruns the payload");
    std::vector<double> v(e.nbytes / sizeof(double));
    std::memcpy(v.data(), bytes.data() + pos + e.offset, e.nbytes);
    ck.tensors.emplace_back(e.name, Tensor(e.shape, std::move(v)));
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

Checkpoint model_checkpoint(const ModelGraph& model, std::uint64_t init_seed) {
  Checkpoint ck;
  const ModelConfig& c = model.config();
  ck.attrs["kind"] = "model";
  ck.attrs["model.image_size"] = std::to_string(c.image_size);
  ck.attrs["model.in_channels"] = std::to_string(c.in_channels);
  ck.attrs["model.base_channels"] = std::to_string(c.base_channels);
  ck.attrs["model.mid_channels"] = std::to_string(c.mid_channels);
  ck.attrs["model.n_blocks"] = std::to_string(c.n_blocks);
  ck.attrs["model.d_sin"] = std::to_string(c.d_sin);
  ck.attrs["model.d_emb"] = std::to_string(c.d_emb);
  ck.attrs["model.groups"] = std::to_string(c.groups);
  ck.attrs["model.time_conditioning"] = c.time_conditioning ? "1" : "0";
  ck.attrs["model.init_seed"] = std::to_string(init_seed);
  for (const auto& [name, t] : model.parameters()) ck.tensors.emplace_back(name, *t);
  return ck;
}

ModelGraph model_from_checkpoint(const Checkpoint& ckpt) {
  auto num = [&](const char* key) -> std::size_t {
    const std::string& v = ckpt.attr(key);
    try {
      std::size_t used = 0;
      const unsigned long long n = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw ArchitectureMismatch(std::string("checkpoint attribute ") + key + " is not an integer: " + v);
    }
  };
  if (ckpt.attrs.count("kind") && ckpt.attr("kind") != "model")
    throw ArchitectureMismatch("checkpoint holds '" + ckpt.attr("kind") + "', not model weights");
  ModelConfig c;
  c.image_size = num("model.image_size");
  c.in_channels = num("model.in_channels");
  c.base_channels = num("model.base_channels");
  c.mid_channels = num("model.mid_channels");
  c.n_blocks = num("model.n_blocks");
  c.d_sin = num("model.d_sin");
  c.d_emb = num("model.d_emb");
  c.groups = num("model.groups");
  c.time_conditioning = num("model.time_conditioning") != 0;
  ModelGraph m = ModelGraph::build(c, num("model.init_seed"));
  load_parameters(m, ckpt);
  return m;
}

void load_parameters(ModelGraph& model, const Checkpoint& ckpt) {
  auto params = model.parameters();
  if (params.size() != ckpt.tensors.size())
    throw ArchitectureMismatch("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                               std::to_string(params.size()));
  for (auto& [name, t] : params) {
    const Tensor& src = ckpt.tensor(name);
    if (src.shape() != t->shape())
      throw ArchitectureMismatch("tensor '" + name + "' has shape " + numerics::shape_string(src.shape()) +
                                 ", model expects " + numerics::shape_string(t->shape()));
    *t = src;
  }
}

}  // namespace diffq::diffusion
