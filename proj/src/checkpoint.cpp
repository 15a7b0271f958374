#include "maclearn/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace maclearn {

namespace {

void append_hex(std::string& out, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  out += buf;
}

double parse_double(const std::string& tok) {
  const char* s = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0') throw IntegrityError("checkpoint: bad numeric token '" + tok + "'");
  return v;
}

}  // namespace

std::string Checkpoint::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw IntegrityError("checkpoint: missing meta key '" + key + "'");
  return it->second;
}

int Checkpoint::meta_int(const std::string& key) const {
  return std::stoi(meta_at(key));
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out;
  out += "maclearn-ckpt 1 " + ckpt.kind + "\n";
  for (const auto& [k, v] : ckpt.meta) out += "meta " + k + " " + v + "\n";
  out += "nets " + std::to_string(ckpt.nets.size()) + "\n";
  for (const auto& net : ckpt.nets) {
    out += "net " + std::to_string(net.num_layers()) + "\n";
    for (const auto& layer : net.layers()) {
      out += "layer " + std::to_string(layer.w.cols()) + " " + std::to_string(layer.w.rows()) +
             " " + activation_name(layer.act) + "\n";
      for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
        out += "w";
        for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
          out += ' ';
          append_hex(out, layer.w(r, c));
        }
        out += '\n';
      }
      out += "b";
      for (Eigen::Index r = 0; r < layer.b.size(); ++r) {
        out += ' ';
        append_hex(out, layer.b(r));
      }
      out += '\n';
    }
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  Checkpoint ckpt;

  auto need = [&](const std::string& what) {
    if (!(in >> tok)) throw IntegrityError("checkpoint: truncated while reading " + what);
    return tok;
  };

  if (need("magic") != "maclearn-ckpt") throw IntegrityError("checkpoint: bad magic");
  if (need("version") != "1") throw IntegrityError("checkpoint: unsupported version");
  ckpt.kind = need("kind");

  std::string section = need("section");
  while (section == "meta") {
    const std::string key = need("meta key");
    const std::string value = need("meta value");
    ckpt.meta[key] = value;
    section = need("section");
  }
  if (section != "nets") throw IntegrityError("checkpoint: expected 'nets'");
  const int n_nets = std::stoi(need("net count"));

  for (int ni = 0; ni < n_nets; ++ni) {
    if (need("net header") != "net") throw IntegrityError("checkpoint: expected 'net'");
    const int n_layers = std::stoi(need("layer count"));
    std::vector<LayerSpec> spec;
    std::vector<Eigen::MatrixXd> ws;
    std::vector<Eigen::VectorXd> bs;
    for (int li = 0; li < n_layers; ++li) {
      if (need("layer header") != "layer") throw IntegrityError("checkpoint: expected 'layer'");
      const int in_dim = std::stoi(need("layer in"));
      const int out_dim = std::stoi(need("layer out"));
      const Activation act = activation_from_name(need("layer activation"));
      Eigen::MatrixXd w(out_dim, in_dim);
      for (int r = 0; r < out_dim; ++r) {
        if (need("row tag") != "w") throw IntegrityError("checkpoint: expected 'w'");
        for (int c = 0; c < in_dim; ++c) w(r, c) = parse_double(need("weight"));
      }
      if (need("bias tag") != "b") throw IntegrityError("checkpoint: expected 'b'");
      Eigen::VectorXd b(out_dim);
      for (int r = 0; r < out_dim; ++r) b(r) = parse_double(need("bias"));
      spec.push_back({in_dim, out_dim, act});
      ws.push_back(std::move(w));
      bs.push_back(std::move(b));
    }
    Mlp net(spec, 0);
    for (int li = 0; li < n_layers; ++li) {
      net.layers()[static_cast<std::size_t>(li)].w = std::move(ws[static_cast<std::size_t>(li)]);
      net.layers()[static_cast<std::size_t>(li)].b = std::move(bs[static_cast<std::size_t>(li)]);
    }
    ckpt.nets.push_back(std::move(net));
  }
  if (need("end tag") != "end") throw IntegrityError("checkpoint: missing end marker");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  atomic_write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file(path));
}

void atomic_write_file(const std::string& path, std::string_view contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IntegrityError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a_file(const std::string& path) { return fnv1a(read_file(path)); }

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace maclearn
