// SPDX-License-Identifier: Apache-2.0
#include "idg/model.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace idg {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocabulary build_vocabulary() {
  std::set<std::string> words;
  for (Pattern p : {Pattern::Appearance, Pattern::Replace}) {
    for (const auto& t : query_templates(p, RemoveDirection::None))
      for (const auto& w : tokenize(t)) words.insert(w);
  }
  for (RemoveDirection d :
       {RemoveDirection::MissingInFirst, RemoveDirection::MissingInSecond})
    for (const auto& t : query_templates(Pattern::Remove, d))
      for (const auto& w : tokenize(t)) words.insert(w);
  Vocabulary v;
  int next = 1;  // 0 reserved for <unk>
  for (const auto& w : words) v.token_to_id[w] = next++;
  return v;
}

std::vector<int> encode_tokens(const Vocabulary& v, const std::string& text) {
  std::vector<int> ids;
  for (const auto& w : tokenize(text)) ids.push_back(v.id_of(w));
  if (ids.empty())
    throw std::invalid_argument("encode_tokens: empty query text");
  return ids;
}

// ---- checkpoint I/O ----

static constexpr char kMagic[8] = {'I', 'D', 'G', 'C', 'K', 'P', 'T', '1'};

template <typename U>
static void write_le(std::ofstream& f, U v) {
  // Host is little-endian on every supported target.
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename U>
static U read_le(std::ifstream& f, const std::string& path) {
  U v{};
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
  return v;
}

void save_checkpoint(const std::string& path, const ParamStore<float>& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(f, std::uint32_t(params.size()));
  for (const auto& [name, tensor] : params) {
    write_le<std::uint32_t>(f, std::uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    write_le<std::uint32_t>(f, std::uint32_t(tensor.shape.size()));
    for (std::size_t d : tensor.shape) write_le<std::uint64_t>(f, d);
    f.write(reinterpret_cast<const char*>(tensor.data.data()),
            std::streamsize(tensor.data.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ParamStore<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  auto count = read_le<std::uint32_t>(f, path);
  ParamStore<float> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = read_le<std::uint32_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    auto rank = read_le<std::uint32_t>(f, path);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = std::size_t(read_le<std::uint64_t>(f, path));
    Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           std::streamsize(t.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

BoxXYXY predict(const ParamStore<float>& params, const ModelConfig& cfg,
                const Vocabulary& vocab, const Image& img1, const Image& img2,
                const std::string& query_text, double* p_diff_out) {
  Tape<float> t;
  BoundParams<float> p(t, params, /*needs_grad=*/false);
  auto ids = encode_tokens(vocab, query_text);
  ModelOutput<float> out = model_forward(t, p, img1, img2, ids, cfg);
  const Tensor<float>& logits = t.val(out.logits);
  const Tensor<float>& boxes = t.val(out.boxes);
  std::size_t best = 0;
  double best_p = -1.0;
  for (std::size_t i = 0; i < logits.shape[0]; ++i) {
    double l0 = logits.at(i, 0), l1 = logits.at(i, 1);
    double m = std::max(l0, l1);
    double p0 = std::exp(l0 - m) / (std::exp(l0 - m) + std::exp(l1 - m));
    if (p0 > best_p) {
      best_p = p0;
      best = i;
    }
  }
  if (p_diff_out) *p_diff_out = best_p;
  BoxCXCYWH c{boxes.at(best, 0), boxes.at(best, 1), boxes.at(best, 2),
              boxes.at(best, 3)};
  BoxXYXY b = to_xyxy(c);
  b.x1 = std::clamp(b.x1, 0.0, 1.0);
  b.y1 = std::clamp(b.y1, 0.0, 1.0);
  b.x2 = std::clamp(b.x2, 0.0, 1.0);
  b.y2 = std::clamp(b.y2, 0.0, 1.0);
  return b;
}

}  // namespace idg
