#include "flowdistill/cli/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowdistill/rng.hpp"

namespace flowdistill::cli {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'F', 'D', 'C', 'K'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string meta_or(const Checkpoint& c, const std::string& key) {
  const auto it = c.meta.find(key);
  if (it == c.meta.end()) throw CheckpointError("checkpoint missing metadata '" + key + "'");
  return it->second;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, ckpt.version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.kind));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.shape.size()));
  for (auto d : ckpt.shape) put<std::uint64_t>(out, d);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint64_t>(out, ckpt.config_hash);
  put<std::uint64_t>(out, ckpt.rng_counter);
  put<std::uint64_t>(out, ckpt.payload.size());
  for (double v : ckpt.payload) put<double>(out, v);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint file");
  Reader r(bytes);
  r.get<std::uint32_t>();  // magic
  Checkpoint c;
  c.version = r.get<std::uint32_t>();
  if (c.version != Checkpoint::kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(c.version));
  const auto kind = r.get<std::uint32_t>();
  if (kind > 2) throw CheckpointError("unknown checkpoint kind");
  c.kind = static_cast<CheckpointKind>(kind);
  const auto rank = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < rank; ++i) c.shape.push_back(r.get<std::uint64_t>());
  const auto nmeta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.get_string();
    c.meta[k] = r.get_string();
  }
  c.config_hash = r.get<std::uint64_t>();
  c.rng_counter = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  r.need(n * sizeof(double));
  c.payload.resize(n);
  for (auto& v : c.payload) v = r.get<double>();
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write '" + path.string() + "'");
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

Checkpoint scene_checkpoint(const Scene& scene, std::uint64_t config_hash, std::uint64_t rng_counter) {
  Checkpoint c;
  c.kind = CheckpointKind::scene;
  c.shape = {scene.shape.height, scene.shape.width};
  c.meta["stage"] = scene.stage;
  c.config_hash = config_hash;
  c.rng_counter = rng_counter;
  c.payload.assign(scene.theta.data(), scene.theta.data() + scene.theta.size());
  return c;
}

Scene scene_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::scene || ckpt.shape.size() != 2)
    throw CheckpointError("checkpoint does not hold a scene");
  Scene s;
  s.shape = {ckpt.shape[0], ckpt.shape[1]};
  if (s.shape.size() != ckpt.payload.size()) throw CheckpointError("scene payload does not match its shape");
  s.theta = Eigen::Map<const Vector>(ckpt.payload.data(), static_cast<Eigen::Index>(ckpt.payload.size()));
  if (const auto it = ckpt.meta.find("stage"); it != ckpt.meta.end()) s.stage = it->second;
  return s;
}

Checkpoint denoiser_checkpoint(const MlpDenoiser& net, std::uint64_t config_hash, std::uint64_t rng_counter) {
  const MlpConfig& cfg = net.config();
  Checkpoint c;
  c.kind = CheckpointKind::denoiser;
  c.shape = {net.num_parameters()};
  c.meta["dim"] = std::to_string(cfg.dim);
  std::string hidden;
  for (auto h : cfg.hidden) hidden += (hidden.empty() ? "" : ",") + std::to_string(h);
  c.meta["hidden"] = hidden;
  c.meta["n_frequencies"] = std::to_string(cfg.n_frequencies);
  c.meta["n_labels"] = std::to_string(cfg.n_labels);
  c.meta["pose_features"] = cfg.pose_features ? "1" : "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", cfg.sigma_data);
  c.meta["sigma_data"] = buf;
  c.config_hash = config_hash;
  c.rng_counter = rng_counter;
  const Vector p = net.parameters();
  c.payload.assign(p.data(), p.data() + p.size());
  return c;
}

std::shared_ptr<MlpDenoiser> denoiser_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != CheckpointKind::denoiser) throw CheckpointError("checkpoint does not hold a denoiser");
  MlpConfig cfg;
  try {
    cfg.dim = std::stoul(meta_or(ckpt, "dim"));
    cfg.hidden.clear();
    std::stringstream hs(meta_or(ckpt, "hidden"));
    std::string item;
    while (std::getline(hs, item, ',')) cfg.hidden.push_back(std::stoul(item));
    cfg.n_frequencies = std::stoul(meta_or(ckpt, "n_frequencies"));
    cfg.n_labels = std::stoul(meta_or(ckpt, "n_labels"));
    cfg.pose_features = meta_or(ckpt, "pose_features") == "1";
    cfg.sigma_data = std::stod(meta_or(ckpt, "sigma_data"));
  } catch (const std::logic_error&) {
    throw CheckpointError("malformed denoiser metadata");
  }
  Rng rng(0);
  auto net = std::make_shared<MlpDenoiser>(cfg, rng);
  if (net->num_parameters() != ckpt.payload.size()) throw CheckpointError("denoiser payload size mismatch");
  net->set_parameters(Eigen::Map<const Vector>(ckpt.payload.data(), static_cast<Eigen::Index>(ckpt.payload.size())));
  return net;
}

}  // namespace flowdistill::cli
