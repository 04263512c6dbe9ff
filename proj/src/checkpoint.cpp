#include "tlmn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "tlmn/config.hpp"
#include "tlmn/error.hpp"

namespace tlmn {

namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw CheckpointError(std::string("truncated checkpoint: missing ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

Json header_for(const ModelState& state) {
  Json tensors = Json::array();
  for (const auto& t : state.layout.tensors()) {
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"offset_bytes", t.offset * sizeof(double)},
                       {"count", t.size}});
  }
  Json features = Json::array();
  for (auto name : kFeatureNames) features.push_back(std::string(name));
  Json h{{"format", "tlmn3"},
         {"config", to_json(state.config)},
         {"feature_order_version", std::string(kFeatureOrderVersion)},
         {"feature_order", features},
         {"norm_stats", to_json(state.norm)},
         {"parameter_count", state.layout.total()},
         {"tensors", tensors},
         {"data_bytes", state.layout.total() * sizeof(double)}};
  h["anchor"] = state.anchor ? to_json(*state.anchor) : Json(nullptr);
  return h;
}

}  // namespace

void write_checkpoint(const ModelState& state, std::ostream& out) {
  if (state.params.size() != state.layout.total()) {
    throw CheckpointError("parameter vector does not match layout");
  }
  const std::string header = header_for(state).dump();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (double v : state.params) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw CheckpointError("failed to write checkpoint");
}

ModelState read_checkpoint(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw CheckpointError("bad magic: not a TLMN3 checkpoint");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (supported versions: " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get_le<std::uint64_t>(in, "header length");
  if (header_len > (std::uint64_t{1} << 30)) throw CheckpointError("implausible header length");
  std::string header_text(header_len, '\0');
  if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
    throw CheckpointError("truncated checkpoint: header");
  }

  Json h;
  try {
    h = Json::parse(header_text);
  } catch (const Json::exception& e) {
    throw CheckpointError(std::string("corrupt header: ") + e.what());
  }

  ModelState state;
  try {
    state.config = model_config_from_json(h.at("config"));
    state.layout = ParameterLayout::for_config(state.config);
    state.norm = norm_stats_from_json(h.at("norm_stats"));
    if (h.contains("anchor") && !h["anchor"].is_null()) {
      state.anchor = anchor_from_json(h["anchor"]);
    }
    if (h.at("feature_order_version").get<std::string>() != kFeatureOrderVersion) {
      throw CheckpointError("feature order version mismatch");
    }
    const auto& order = h.at("feature_order");
    if (order.size() != kFeatureCount) throw CheckpointError("feature order length mismatch");
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      if (order[i].get<std::string>() != kFeatureNames[i]) {
        throw CheckpointError("feature order mismatch at position " + std::to_string(i));
      }
    }
    const auto& tensors = h.at("tensors");
    const auto& expected = state.layout.tensors();
    if (tensors.size() != expected.size()) throw CheckpointError("tensor count mismatch");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto& t = tensors[i];
      if (t.at("name").get<std::string>() != expected[i].name ||
          t.at("shape").get<std::vector<std::size_t>>() != expected[i].shape ||
          t.at("offset_bytes").get<std::size_t>() != expected[i].offset * sizeof(double) ||
          t.at("count").get<std::size_t>() != expected[i].size) {
        throw CheckpointError("tensor '" + expected[i].name +
                              "' shape/offset inconsistent with config");
      }
    }
    if (h.at("parameter_count").get<std::size_t>() != state.layout.total() ||
        h.at("data_bytes").get<std::size_t>() != state.layout.total() * sizeof(double)) {
      throw CheckpointError("parameter count inconsistent with config");
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(std::string("invalid header: ") + e.what());
  } catch (const Json::exception& e) {
    throw CheckpointError(std::string("invalid header: ") + e.what());
  }

  state.params.resize(state.layout.total());
  for (double& v : state.params) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "parameters"));
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes after parameter block");
  }
  return state;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(state, out);
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace tlmn
