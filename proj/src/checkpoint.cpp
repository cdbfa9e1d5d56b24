#include "flair/train/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace flair::train {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'A', 'I', 'R', 'N', 'E', 'T'};
constexpr int kVersion = 1;

json header_json(net::UTTNet<float>& net, uint64_t seed, const Strategies& strategies,
                 const prep::FilterConfig& filter) {
  json h;
  h["format"] = "flair-checkpoint";
  h["version"] = kVersion;
  h["seed"] = seed;
  h["config"] = net_config_to_json(net.cfg);
  h["strategies"] = strategies_to_json(strategies);
  h["filter"] = {{"prob_threshold", filter.prob_threshold},
                 {"coverage_threshold", filter.coverage_threshold}};
  json classes = json::array();
  for (const auto& c : Nomenclature::flair().classes) classes.push_back(c.name);
  h["classes"] = classes;
  json params = json::array();
  nn::ParamList<float> pl;
  net.params(pl);
  for (auto& pr : pl) {
    json p;
    p["name"] = pr.name;
    p["shape"] = pr.p->v.shape;
    params.push_back(p);
  }
  h["params"] = params;
  return h;
}

}  // namespace

json net_config_to_json(const net::UTTConfig& cfg) {
  json j;
  j["texture"] = {{"backbone", cfg.texture.backbone},
                  {"small_channels", cfg.texture.small_channels},
                  {"small_decoder", cfg.texture.small_decoder},
                  {"n_classes", cfg.texture.n_classes},
                  {"use_metadata", cfg.texture.use_metadata}};
  j["temporal"] = {{"encoder_widths", cfg.temporal.encoder_widths},
                   {"decoder_widths", cfg.temporal.decoder_widths},
                   {"n_heads", cfg.temporal.n_heads},
                   {"d_k", cfg.temporal.d_k},
                   {"n_classes", cfg.temporal.n_classes}};
  j["fusion"] = {{"sat_superpatch_size", cfg.fusion.sat_superpatch_size},
                 {"footprint_px", cfg.fusion.footprint_px},
                 {"use_cropped", cfg.fusion.use_cropped},
                 {"use_collapsed", cfg.fusion.use_collapsed},
                 {"cropped_kernel", cfg.fusion.cropped_kernel},
                 {"mlp_hidden", cfg.fusion.mlp_hidden},
                 {"mlp_dropout", cfg.fusion.mlp_dropout}};
  j["use_temporal"] = cfg.use_temporal;
  j["use_metadata"] = cfg.use_metadata;
  return j;
}

net::UTTConfig net_config_from_json(const json& j) {
  net::UTTConfig cfg;
  try {
    const json& t = j.at("texture");
    cfg.texture.backbone = t.at("backbone").get<std::string>();
    cfg.texture.small_channels = t.at("small_channels").get<std::vector<long>>();
    cfg.texture.small_decoder = t.at("small_decoder").get<std::vector<long>>();
    cfg.texture.n_classes = t.at("n_classes").get<long>();
    cfg.texture.use_metadata = t.at("use_metadata").get<bool>();
    const json& s = j.at("temporal");
    cfg.temporal.encoder_widths = s.at("encoder_widths").get<std::vector<long>>();
    cfg.temporal.decoder_widths = s.at("decoder_widths").get<std::vector<long>>();
    cfg.temporal.n_heads = s.at("n_heads").get<long>();
    cfg.temporal.d_k = s.at("d_k").get<long>();
    cfg.temporal.n_classes = s.at("n_classes").get<long>();
    const json& f = j.at("fusion");
    cfg.fusion.sat_superpatch_size = f.at("sat_superpatch_size").get<long>();
    cfg.fusion.footprint_px = f.at("footprint_px").get<long>();
    cfg.fusion.use_cropped = f.at("use_cropped").get<bool>();
    cfg.fusion.use_collapsed = f.at("use_collapsed").get<bool>();
    cfg.fusion.cropped_kernel = f.at("cropped_kernel").get<long>();
    cfg.fusion.mlp_hidden = f.at("mlp_hidden").get<std::vector<long>>();
    cfg.fusion.mlp_dropout = f.at("mlp_dropout").get<double>();
    cfg.use_temporal = j.at("use_temporal").get<bool>();
    cfg.use_metadata = j.at("use_metadata").get<bool>();
  } catch (const json::exception& e) {
    throw format_error(std::string("network config: ") + e.what());
  }
  return cfg;
}

void save_checkpoint(const fs::path& path, net::UTTNet<float>& net, uint64_t seed,
                     const Strategies& strategies, const prep::FilterConfig& filter) {
  std::string header = header_json(net, seed, strategies, filter).dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string() + " for writing");
  f.write(kMagic, 8);
  uint64_t hlen = header.size();
  unsigned char lenb[8];
  for (int i = 0; i < 8; ++i) lenb[i] = (unsigned char)(hlen >> (8 * i));
  f.write(reinterpret_cast<char*>(lenb), 8);
  f.write(header.data(), std::streamsize(header.size()));
  nn::ParamList<float> pl;
  net.params(pl);
  for (auto& pr : pl)
    f.write(reinterpret_cast<const char*>(pr.p->v.data.data()),
            std::streamsize(pr.p->v.data.size() * sizeof(float)));
  if (!f) throw error("short write to " + path.string());
}

namespace {

json read_header(std::ifstream& f, const fs::path& path) {
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw format_error(path.string() + " is not a checkpoint file");
  unsigned char lenb[8];
  f.read(reinterpret_cast<char*>(lenb), 8);
  if (!f) throw format_error(path.string() + ": truncated header length");
  uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) hlen |= uint64_t(lenb[i]) << (8 * i);
  if (hlen > (64u << 20)) throw format_error(path.string() + ": implausible header length");
  std::string header(hlen, '\0');
  f.read(header.data(), std::streamsize(hlen));
  if (!f) throw format_error(path.string() + ": truncated header");
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw format_error(path.string() + ": header is not JSON: " + e.what());
  }
  if (h.value("format", "") != "flair-checkpoint")
    throw format_error(path.string() + ": unknown checkpoint format");
  if (h.value("version", -1) != kVersion)
    throw format_error(path.string() + ": unsupported checkpoint version");
  return h;
}

CheckpointInfo info_of(const json& h) {
  CheckpointInfo info;
  info.seed = h.at("seed").get<uint64_t>();
  info.config = net_config_from_json(h.at("config"));
  info.strategies = strategies_from_json(h.at("strategies"));
  try {
    info.filter.prob_threshold = h.at("filter").at("prob_threshold").get<int>();
    info.filter.coverage_threshold = h.at("filter").at("coverage_threshold").get<double>();
  } catch (const json::exception& e) {
    throw format_error(std::string("checkpoint filter config: ") + e.what());
  }
  info.class_names = h.at("classes").get<std::vector<std::string>>();
  return info;
}

}  // namespace

CheckpointInfo load_checkpoint(const fs::path& path, net::UTTNet<float>& net) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string());
  json h = read_header(f, path);
  CheckpointInfo info = info_of(h);

  Rng init_rng(0);  // every parameter is overwritten below
  net.init(info.config, init_rng);
  nn::ParamList<float> pl;
  net.params(pl);

  const json& params = h.at("params");
  if (params.size() != pl.size())
    throw format_error(path.string() + ": holds " + std::to_string(params.size()) +
                       " parameters, the config rebuilds " + std::to_string(pl.size()));
  for (size_t i = 0; i < pl.size(); ++i) {
    const json& p = params.at(i);
    std::string name = p.at("name").get<std::string>();
    auto shape = p.at("shape").get<std::vector<long>>();
    if (name != pl[i].name || shape != pl[i].p->v.shape)
      throw format_error(path.string() + ": parameter " + std::to_string(i) + " is '" + name +
                         "', the config rebuilds '" + pl[i].name + "'");
    f.read(reinterpret_cast<char*>(pl[i].p->v.data.data()),
           std::streamsize(pl[i].p->v.data.size() * sizeof(float)));
    if (!f) throw format_error(path.string() + ": truncated at parameter '" + name + "'");
  }
  return info;
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw error("cannot open " + path.string());
  return info_of(read_header(f, path));
}

}  // namespace flair::train
