#include "mora/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "mora/errors.hpp"

namespace mora {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'O', 'R', 'A', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }

void append_tensor(std::string& out, std::span<const double> values) {
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
}

std::string chars_of(const Vocabulary& v) {
  std::string s;
  for (std::size_t id = Vocabulary::kFirstChar; id < v.size(); ++id) s.push_back(*v.symbol(static_cast<TokenId>(id)));
  return s;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string group_hash(const NamedTensors& tensors) {
  std::string buf;
  for (const auto& [name, t] : tensors) {
    buf += name;
    buf.push_back('\0');
    put_u64(buf, t.rank());
    for (std::size_t d : t.shape()) put_u64(buf, d);
    append_tensor(buf, t.data());
  }
  return sha256_hex(buf);
}

std::string serialize_checkpoint(const Model& model, const OptimizerState& opt) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["mode"] = model.mode == TrainMode::static_lora ? "static" : "dynamic";
  header["config"] = model.config.to_text();
  header["vocabulary"] = {{"pad", Vocabulary::kPad},
                          {"bos", Vocabulary::kBos},
                          {"eos", Vocabulary::kEos},
                          {"sep", Vocabulary::kSep},
                          {"first_char", Vocabulary::kFirstChar},
                          {"chars", chars_of(model.vocab)}};

  std::string data;
  std::size_t offset = 0;
  json groups = json::array();
  auto add_group = [&](const std::string& name, const NamedTensors& tensors) {
    json entries = json::array();
    for (const auto& [tname, t] : tensors) {
      entries.push_back({{"name", tname}, {"shape", t.shape()}, {"offset", offset}});
      append_tensor(data, t.data());
      offset += t.size();
    }
    groups.push_back({{"group", name}, {"sha256", group_hash(tensors)}, {"tensors", entries}});
  };
  for (const auto& [gname, tensors] : model.groups()) add_group(gname, tensors);

  NamedTensors moments;
  for (const auto& [name, m] : opt.moments) {
    if (m.m.empty()) continue;
    moments.emplace_back("m:" + name, Tensor::from_data({m.m.size()}, m.m));
    moments.emplace_back("v:" + name, Tensor::from_data({m.v.size()}, m.v));
  }
  add_group("optimizer", moments);
  header["groups"] = groups;
  header["optimizer_step"] = opt.step;

  const std::string h = header.dump(1);
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u64(out, h.size());
  out += h;
  out += data;
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const OptimizerState& opt) {
  const std::string bytes = serialize_checkpoint(model, opt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write on checkpoint " + path.string());
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw Error("not a checkpoint file (bad magic)");
  }
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&header_len, bytes.data() + 12, 8);
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  if (header_len > bytes.size() - 20) throw Error("checkpoint header overruns the file");
  json header;
  try {
    header = json::parse(bytes.substr(20, header_len));
  } catch (const json::parse_error& e) {
    throw Error(std::string("checkpoint header: ") + e.what());
  }
  const std::string_view data = bytes.substr(20 + header_len);
  if (data.size() % sizeof(double) != 0) throw Error("checkpoint data section is not a whole number of doubles");
  const std::size_t doubles = data.size() / sizeof(double);

  const RunConfig config = RunConfig::from_text(header.at("config").get<std::string>());
  const TrainMode mode = header.at("mode").get<std::string>() == "static" ? TrainMode::static_lora : TrainMode::dynamic;
  Checkpoint ck{init_model(config, mode), {}, {}};
  if (header.at("vocabulary").at("chars").get<std::string>() != chars_of(ck.model.vocab)) {
    throw Error("checkpoint vocabulary differs from this build's vocabulary");
  }
  ck.optimizer = make_optimizer(ck.model);
  ck.optimizer.step = header.at("optimizer_step").get<std::size_t>();

  std::map<std::string, Tensor> by_name;
  for (const auto& [gname, tensors] : ck.model.groups())
    for (const auto& [name, t] : tensors) by_name[name] = t;

  auto read = [&](const json& entry, std::size_t count) {
    const std::size_t off = entry.at("offset").get<std::size_t>();
    if (off > doubles || count > doubles - off) throw Error("tensor " + entry.at("name").get<std::string>() + " overruns data");
    std::vector<double> v(count);
    std::memcpy(v.data(), data.data() + off * sizeof(double), count * sizeof(double));
    return v;
  };

  for (const json& g : header.at("groups")) {
    const std::string gname = g.at("group").get<std::string>();
    NamedTensors loaded;
    for (const json& e : g.at("tensors")) {
      const std::string name = e.at("name").get<std::string>();
      const Shape shape = e.at("shape").get<Shape>();
      std::vector<double> values = read(e, numel(shape));
      if (gname == "optimizer") {
        const std::string pname = name.substr(2);
        auto it = ck.optimizer.moments.find(pname);
        if (it == ck.optimizer.moments.end()) throw Error("optimizer state for unknown parameter " + pname);
        (name[0] == 'm' ? it->second.m : it->second.v) = values;
        loaded.emplace_back(name, Tensor::from_data(shape, std::move(values)));
        continue;
      }
      auto it = by_name.find(name);
      if (it == by_name.end()) throw Error("checkpoint tensor " + name + " has no counterpart in the model");
      if (it->second.shape() != shape) {
        throw Error("checkpoint tensor " + name + " has shape " + shape_str(shape) + ", model expects " +
                    shape_str(it->second.shape()));
      }
      auto dst = it->second.mutable_data();
      std::copy(values.begin(), values.end(), dst.begin());
      loaded.emplace_back(name, it->second);
    }
    const std::string want = g.at("sha256").get<std::string>();
    if (group_hash(loaded) != want) throw Error("checkpoint group " + gname + " fails its content hash");
    ck.hashes[gname] = want;
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace mora
