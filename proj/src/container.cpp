// Copyright 2026 The Minima Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "minima/container.hpp"

#include <bit>
#include <cstring>
#include <set>

#include "minima/errors.hpp"
#include "minima/io.hpp"

namespace minima {

namespace {

constexpr std::uint8_t kMagic[4] = {0x4D, 0x4E, 0x4D, 0x41};
constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 8 + 8;

std::size_t align_up(std::size_t n) {
  return (n + kPayloadAlignment - 1) / kPayloadAlignment * kPayloadAlignment;
}

std::size_t scalar_size(DType d) { return d == DType::F32 ? 4 : 8; }

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void pad_to(std::size_t n) { buf_.resize(n, 0); }
  void patch_u64(std::size_t at, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  std::size_t size() const { return buf_.size(); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint64_t get(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw TruncationError("container ends inside the index");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void write_scalars(Writer& w, const Tensor& t, DType d) {
  for (double v : t.data()) {
    if (d == DType::F32) {
      w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      w.u64(std::bit_cast<std::uint64_t>(v));
    }
  }
}

double read_scalar(const std::uint8_t* p, DType d) {
  std::uint64_t v = 0;
  const std::size_t n = scalar_size(d);
  for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  if (d == DType::F32) return std::bit_cast<float>(static_cast<std::uint32_t>(v));
  return std::bit_cast<double>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file) {
  std::set<std::string> names;
  for (const auto& e : file.entries) {
    if (!names.insert(e.name).second) throw DuplicateEntryError("duplicate entry '" + e.name + "'");
    if (e.name.size() > 0xFFFF) throw FormatError("entry name too long");
    if (e.tensor.rank() > 0xFF) throw FormatError("too many dimensions in '" + e.name + "'");
  }

  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kContainerVersion);
  w.u64(file.entries.size());
  const std::size_t meta_slot = w.size();
  w.u64(0);
  w.u64(0);

  std::vector<std::size_t> offset_slots;
  for (const auto& e : file.entries) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.dtype));
    w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) w.u64(d);
    offset_slots.push_back(w.size());
    w.u64(0);
  }
  for (std::size_t i = 0; i < file.entries.size(); ++i) {
    w.pad_to(align_up(w.size()));
    w.patch_u64(offset_slots[i], w.size());
    write_scalars(w, file.entries[i].tensor, file.entries[i].dtype);
  }
  if (!file.metadata.is_null()) {
    const std::string meta = file.metadata.dump();
    w.pad_to(align_up(w.size()));
    w.patch_u64(meta_slot, w.size());
    w.patch_u64(meta_slot + 8, meta.size());
    w.bytes(meta.data(), meta.size());
  }
  return w.take();
}

TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic: not an MNMA container");
  }
  if (bytes.size() < kHeaderSize) throw TruncationError("container header is truncated");
  Reader r(bytes);
  r.get(4);
  const auto version = r.get(4);
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const std::uint64_t count = r.get(8);
  const std::uint64_t meta_offset = r.get(8);
  const std::uint64_t meta_length = r.get(8);

  TensorFile file;
  std::set<std::string> names;
  std::uint64_t last_end = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor e;
    e.name = r.str(r.get(2));
    if (!names.insert(e.name).second) throw DuplicateEntryError("duplicate entry '" + e.name + "'");
    const auto dtype = r.get(1);
    if (dtype > 1) throw FormatError("entry '" + e.name + "' has unknown dtype " + std::to_string(dtype));
    e.dtype = static_cast<DType>(dtype);
    Shape shape(r.get(1));
    for (auto& d : shape) d = r.get(8);
    const std::uint64_t offset = r.get(8);
    if (offset % kPayloadAlignment != 0 || offset < last_end) {
      throw FormatError("entry '" + e.name + "' has a misplaced payload offset");
    }
    const std::size_t n = shape_product(shape);
    const std::uint64_t end = offset + n * scalar_size(e.dtype);
    if (end > bytes.size()) throw TruncationError("payload of '" + e.name + "' is truncated");
    std::vector<double> data(n);
    for (std::size_t k = 0; k < n; ++k) {
      data[k] = read_scalar(bytes.data() + offset + k * scalar_size(e.dtype), e.dtype);
    }
    e.tensor = Tensor(std::move(shape), std::move(data));
    last_end = end;
    file.entries.push_back(std::move(e));
  }
  if (meta_length > 0) {
    if (meta_offset < r.pos() || meta_offset + meta_length > bytes.size()) {
      throw TruncationError("metadata is truncated");
    }
    try {
      file.metadata = nlohmann::json::parse(bytes.begin() + meta_offset,
                                            bytes.begin() + meta_offset + meta_length);
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("metadata is not valid JSON: ") + ex.what());
    }
  }
  return file;
}

void write_tensor_file(const TensorFile& file, const std::filesystem::path& path) {
  write_file_atomic(path, encode_tensor_file(file));
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  return decode_tensor_file(read_file(path));
}

TensorFile model_to_file(const ModelContainer& model) {
  TensorFile f;
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& e : model.entries()) {
    f.entries.push_back({e.name, e.dtype, e.matrix});
    entries[e.name] = {{"layer_index", e.layer_index},
                       {"submodule_kind", std::string(submodule_name(e.kind))}};
  }
  f.metadata = {{"kind", "model"},
                {"total_layers", model.total_layers()},
                {"provenance", model.provenance()},
                {"entries", entries}};
  return f;
}

ModelContainer model_from_file(const TensorFile& file) {
  const auto& meta = file.metadata;
  if (!meta.is_object() || meta.value("kind", "") != "model") {
    throw FormatError("container does not hold a model");
  }
  try {
    ModelContainer model(meta.at("total_layers").get<std::size_t>(),
                         meta.at("provenance").get<std::string>());
    for (const auto& e : file.entries) {
      const auto& m = meta.at("entries").at(e.name);
      model.add({e.name, e.tensor, m.at("layer_index").get<std::size_t>(),
                 parse_submodule(m.at("submodule_kind").get<std::string>()), e.dtype});
    }
    return model;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("malformed model metadata: ") + ex.what());
  }
}

void write_container(const ModelContainer& model, const std::filesystem::path& path) {
  write_tensor_file(model_to_file(model), path);
}

ModelContainer read_container(const std::filesystem::path& path) {
  return model_from_file(read_tensor_file(path));
}

}  // namespace minima
