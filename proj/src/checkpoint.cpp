/* Copyright 2026 The rlsdeconv Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "rlsd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "rlsd/config.hpp"
#include "rlsd/errors.hpp"

namespace rlsd {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'R', 'L', 'S', 'D'};
constexpr const char* kMetaModel = "meta.model";
constexpr const char* kMetaEpoch = "meta.epoch";
constexpr const char* kMetaSeed = "meta.seed";
constexpr const char* kMetaHash = "meta.config_hash";
constexpr const char* kMetaAdamT = "meta.adam_t";
constexpr const char* kAdamM = "adam.m.";
constexpr const char* kAdamV = "adam.v.";

template <typename T>
void put(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const noexcept { return pos_ == data_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError("checkpoint '" + path_ + "': " + what + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated file");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

const Tensor& find(const NamedTensors& list, const std::string& name, const fs::path& path) {
  for (const auto& [n, t] : list)
    if (n == name) return t;
  throw IoError("checkpoint '" + path.string() + "' has no '" + name + "' entry");
}

}  // namespace

void quantize_f32(Tensor& t) noexcept {
  for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

void write_archive(const fs::path& path, const NamedTensors& tensors) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw ParameterError("tensor name too long: " + name.substr(0, 32) + "...");
    if (t.rank() > 0xFF) throw ParameterError("tensor rank too large for '" + name + "'");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.values()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put<std::uint32_t>(out, bits);
    }
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

NamedTensors read_archive(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}), path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) r.fail("bad magic (not an RLSD checkpoint)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported format version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  NamedTensors out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = r.get<std::uint16_t>();
    std::string name = r.bytes(len);
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    Tensor t(shape);
    for (double& v : t.values()) {
      const auto bits = r.get<std::uint32_t>();
      float fv;
      std::memcpy(&fv, &bits, 4);
      v = fv;
    }
    out.emplace_back(std::move(name), std::move(t));
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return out;
}

Tensor encode_u64(std::uint64_t value) {
  Tensor t({4});
  for (std::size_t i = 0; i < 4; ++i) t[i] = static_cast<double>((value >> (16 * i)) & 0xFFFF);
  return t;
}

std::uint64_t decode_u64(const Tensor& t) {
  if (t.size() != 4) throw IoError("malformed u64 entry in checkpoint");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint64_t>(t[i]) << (16 * i);
  return v;
}

Tensor encode_text(const std::string& text) {
  Tensor t({text.size()});
  for (std::size_t i = 0; i < text.size(); ++i) t[i] = static_cast<unsigned char>(text[i]);
  return t;
}

std::string decode_text(const Tensor& t) {
  std::string s(t.size(), '\0');
  for (std::size_t i = 0; i < t.size(); ++i) s[i] = static_cast<char>(static_cast<unsigned char>(t[i]));
  return s;
}

void save_checkpoint(const fs::path& path, const RlsdnModel& model, const TrainingState* state) {
  NamedTensors list;
  list.emplace_back(kMetaModel, encode_text(model_config_to_ini(model.config())));
  if (state) {
    list.emplace_back(kMetaEpoch, encode_u64(state->epoch));
    list.emplace_back(kMetaSeed, encode_u64(state->seed));
    list.emplace_back(kMetaHash, encode_u64(state->config_hash));
    list.emplace_back(kMetaAdamT, encode_u64(state->adam.t));
  }
  for (const auto& [name, t] : model.params()) list.emplace_back(name, t);
  if (state) {
    for (const auto& [name, t] : state->adam.m) list.emplace_back(kAdamM + name, t);
    for (const auto& [name, t] : state->adam.v) list.emplace_back(kAdamV + name, t);
  }
  write_archive(path, list);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  const NamedTensors list = read_archive(path);
  ModelConfig cfg;
  try {
    cfg = model_config_from_ini(decode_text(find(list, kMetaModel, path)));
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError("checkpoint '" + path.string() + "': bad model description: " + e.what());
  }
  ParamSet params, m, v;
  bool has_state = false;
  for (const auto& [name, t] : list) {
    if (name.rfind("meta.", 0) == 0) {
      has_state = has_state || name == kMetaEpoch;
    } else if (name.rfind(kAdamM, 0) == 0) {
      m.add(name.substr(std::strlen(kAdamM)), t);
    } else if (name.rfind(kAdamV, 0) == 0) {
      v.add(name.substr(std::strlen(kAdamV)), t);
    } else {
      params.add(name, t);
    }
  }
  std::optional<TrainingState> state;
  if (has_state) {
    TrainingState s;
    s.epoch = decode_u64(find(list, kMetaEpoch, path));
    s.seed = decode_u64(find(list, kMetaSeed, path));
    s.config_hash = decode_u64(find(list, kMetaHash, path));
    s.adam.t = decode_u64(find(list, kMetaAdamT, path));
    s.adam.m = std::move(m);
    s.adam.v = std::move(v);
    state = std::move(s);
  }
  try {
    return {RlsdnModel(cfg, std::move(params)), std::move(state)};
  } catch (const std::exception& e) {
    throw IoError("checkpoint '" + path.string() + "': " + e.what());
  }
}

}  // namespace rlsd
