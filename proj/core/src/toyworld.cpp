#include "dsegan/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dsegan/ops.hpp"

namespace dsegan {

const std::array<const char*, kVocabSize> kVocab = {
    "<pad>", "a",      "the",    "is",     "red",   "green", "blue",
    "yellow", "white",  "purple", "circle", "square", "triangle", "cross",
    "small",  "large",  "left",   "right",  "top",   "bottom", "center",
};

namespace {

constexpr std::uint8_t kBg[3] = {40, 40, 40};
constexpr float kClusterDistance = 60.0f;

// Palette indexed relative to kColorFirst.
constexpr std::uint8_t kPalette[kColorCount][3] = {
    {255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {255, 255, 0}, {255, 255, 255}, {160, 32, 240},
};

int find_token(const ToyCaption& c, int first, int count, const char* category) {
  int found = -1;
  for (int t : c.tokens) {
    if (t >= first && t < first + count) {
      if (found >= 0) {
        throw std::invalid_argument(std::string("caption has more than one ") + category +
                                    " token");
      }
      found = t;
    }
  }
  if (found < 0) {
    throw std::invalid_argument(std::string("caption has no ") + category + " token");
  }
  return found;
}

void region_center(int position, int res, int* cx, int* cy) {
  switch (position - kPositionFirst) {
    case 0: *cx = res / 4; *cy = res / 2; break;      // left
    case 1: *cx = 3 * res / 4; *cy = res / 2; break;  // right
    case 2: *cx = res / 2; *cy = res / 4; break;      // top
    case 3: *cx = res / 2; *cy = 3 * res / 4; break;  // bottom
    default: *cx = res / 2; *cy = res / 2; break;     // center
  }
}

bool inside_shape(int shape, int dx, int dy, int r) {
  switch (shape - kShapeFirst) {
    case 0:  // circle
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::abs(dx) <= r && std::abs(dy) <= r;
    case 2:  // triangle, apex up
      return dy >= -r && dy <= r && 2 * std::abs(dx) <= dy + r;
    default: {  // cross
      int bar = std::max(1, r / 3);
      return (std::abs(dx) <= bar && std::abs(dy) <= r) ||
             (std::abs(dy) <= bar && std::abs(dx) <= r);
    }
  }
}

float rgb_distance(float r0, float g0, float b0, float r1, float g1, float b1) {
  float dr = r0 - r1, dg = g0 - g1, db = b0 - b1;
  return std::sqrt(dr * dr + dg * dg + db * db);
}

}  // namespace

int ToyCaption::color() const { return find_token(*this, kColorFirst, kColorCount, "color"); }
int ToyCaption::shape() const { return find_token(*this, kShapeFirst, kShapeCount, "shape"); }
int ToyCaption::size_token() const {
  return find_token(*this, kSizeFirst, kSizeCount, "size");
}
int ToyCaption::position() const {
  return find_token(*this, kPositionFirst, kPositionCount, "position");
}

std::string ToyCaption::text() const {
  std::string out;
  for (int t : tokens) {
    if (t == kPadToken) continue;
    if (!out.empty()) out += ' ';
    out += kVocab[static_cast<std::size_t>(t)];
  }
  return out;
}

ToyCaption make_caption(int color, int shape, int size, int position) {
  auto check = [](int t, int first, int count, const char* what) {
    if (t < first || t >= first + count) {
      throw std::invalid_argument(std::string("make_caption: bad ") + what + " token");
    }
  };
  check(color, kColorFirst, kColorCount, "color");
  check(shape, kShapeFirst, kShapeCount, "shape");
  check(size, kSizeFirst, kSizeCount, "size");
  check(position, kPositionFirst, kPositionCount, "position");
  ToyCaption c;
  c.tokens = {2 /*the*/, size, color, shape, 3 /*is*/, position, kPadToken, kPadToken};
  return c;
}

ToyCaption parse_caption(const std::string& text) {
  ToyCaption c;
  c.tokens.fill(kPadToken);
  std::istringstream in(text);
  std::string word;
  int n = 0;
  while (in >> word) {
    int id = -1;
    for (int i = 0; i < kVocabSize; ++i) {
      if (word == kVocab[static_cast<std::size_t>(i)]) {
        id = i;
        break;
      }
    }
    if (id < 0) {
      throw std::invalid_argument("parse_caption: unknown token '" + word + "'");
    }
    if (n >= kCaptionLen) {
      throw std::invalid_argument("parse_caption: more than 8 tokens");
    }
    c.tokens[static_cast<std::size_t>(n++)] = id;
  }
  // Validates the one-token-per-category invariant.
  c.color();
  c.shape();
  c.size_token();
  c.position();
  return c;
}

std::vector<ToyCaption> all_captions() {
  std::vector<ToyCaption> out;
  out.reserve(kColorCount * kShapeCount * kSizeCount * kPositionCount);
  for (int c = 0; c < kColorCount; ++c) {
    for (int s = 0; s < kShapeCount; ++s) {
      for (int z = 0; z < kSizeCount; ++z) {
        for (int p = 0; p < kPositionCount; ++p) {
          out.push_back(make_caption(kColorFirst + c, kShapeFirst + s, kSizeFirst + z,
                                     kPositionFirst + p));
        }
      }
    }
  }
  return out;
}

ToyImage render(const ToyCaption& caption, int resolution) {
  if (resolution < 8) {
    throw std::invalid_argument("render: resolution too small");
  }
  ToyImage img;
  img.res = resolution;
  img.rgb.assign(static_cast<std::size_t>(resolution) * resolution * 3, 0);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    img.rgb[i] = kBg[i % 3];
  }
  int shape = caption.shape();
  const std::uint8_t* col = kPalette[caption.color() - kColorFirst];
  float frac = (caption.size_token() == kSizeFirst) ? 0.15f : 0.30f;
  int r = static_cast<int>(std::lround(frac * static_cast<float>(resolution)));
  int cx = 0, cy = 0;
  region_center(caption.position(), resolution, &cx, &cy);
  for (int y = std::max(0, cy - r); y <= std::min(resolution - 1, cy + r); ++y) {
    for (int x = std::max(0, cx - r); x <= std::min(resolution - 1, cx + r); ++x) {
      if (!inside_shape(shape, x - cx, y - cy, r)) continue;
      std::size_t base = static_cast<std::size_t>((y * resolution + x) * 3);
      img.rgb[base] = col[0];
      img.rgb[base + 1] = col[1];
      img.rgb[base + 2] = col[2];
    }
  }
  return img;
}

std::vector<std::pair<ToyCaption, ToyImage>> sample_dataset(std::uint64_t seed, int n,
                                                            int resolution) {
  if (n <= 0) {
    throw std::invalid_argument("sample_dataset: n must be positive");
  }
  RandomSource rng(seed);
  std::vector<std::pair<ToyCaption, ToyImage>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ToyCaption c = make_caption(kColorFirst + rng.uniform_int(kColorCount),
                                kShapeFirst + rng.uniform_int(kShapeCount),
                                kSizeFirst + rng.uniform_int(kSizeCount),
                                kPositionFirst + rng.uniform_int(kPositionCount));
    out.emplace_back(c, render(c, resolution));
  }
  return out;
}

AttributeReport attribute_accuracy(const ToyImage& image, const ToyCaption& caption) {
  AttributeReport rep;
  int res = image.res;
  // Bin non-background pixels by nearest palette color.
  std::array<std::int64_t, kColorCount> count{};
  std::array<double, kColorCount> sum_r{}, sum_g{}, sum_b{}, sum_x{}, sum_y{};
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      float pr = image.at(x, y, 0), pg = image.at(x, y, 1), pb = image.at(x, y, 2);
      if (rgb_distance(pr, pg, pb, kBg[0], kBg[1], kBg[2]) <= kClusterDistance) continue;
      int best = 0;
      float best_d = 1e30f;
      for (int k = 0; k < kColorCount; ++k) {
        float d = rgb_distance(pr, pg, pb, kPalette[k][0], kPalette[k][1], kPalette[k][2]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      count[static_cast<std::size_t>(best)] += 1;
      sum_r[static_cast<std::size_t>(best)] += pr;
      sum_g[static_cast<std::size_t>(best)] += pg;
      sum_b[static_cast<std::size_t>(best)] += pb;
      sum_x[static_cast<std::size_t>(best)] += x;
      sum_y[static_cast<std::size_t>(best)] += y;
    }
  }
  int dom = -1;
  std::int64_t dom_count = 0;
  for (int k = 0; k < kColorCount; ++k) {
    if (count[static_cast<std::size_t>(k)] > dom_count) {
      dom_count = count[static_cast<std::size_t>(k)];
      dom = k;
    }
  }
  if (dom < 0) {
    return rep;  // all background
  }
  double inv = 1.0 / static_cast<double>(dom_count);
  const std::uint8_t* want = kPalette[caption.color() - kColorFirst];
  rep.color_ok = rgb_distance(static_cast<float>(sum_r[static_cast<std::size_t>(dom)] * inv),
                              static_cast<float>(sum_g[static_cast<std::size_t>(dom)] * inv),
                              static_cast<float>(sum_b[static_cast<std::size_t>(dom)] * inv),
                              want[0], want[1], want[2]) <= kClusterDistance;
  // Regions are the Voronoi cells of the five region centers.
  double cx = sum_x[static_cast<std::size_t>(dom)] * inv;
  double cy = sum_y[static_cast<std::size_t>(dom)] * inv;
  int best_pos = -1;
  double best_d = 1e30;
  for (int p = 0; p < kPositionCount; ++p) {
    int rx = 0, ry = 0;
    region_center(kPositionFirst + p, res, &rx, &ry);
    double dx = cx - rx, dy = cy - ry;
    double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best_pos = p;
    }
  }
  rep.position_ok = (kPositionFirst + best_pos) == caption.position();
  return rep;
}

Tensor image_to_tensor(const ToyImage& image) {
  std::vector<float> data(image.rgb.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<float>(image.rgb[i]) / 127.5f - 1.0f;
  }
  return Tensor::from_data({image.res * image.res, 3}, std::move(data));
}

ToyImage tensor_to_image(const Tensor& t) {
  if (t.rank() != 2 || t.dim(1) != 3) {
    throw std::invalid_argument("tensor_to_image: expected [n x 3], got " +
                                shape_str(t.shape()));
  }
  int res = static_cast<int>(std::lround(std::sqrt(static_cast<double>(t.dim(0)))));
  if (res * res != t.dim(0)) {
    throw std::invalid_argument("tensor_to_image: pixel count is not square");
  }
  ToyImage img;
  img.res = res;
  img.rgb.resize(t.values().size());
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    float v = std::clamp(t.values()[i], -1.0f, 1.0f);
    img.rgb[i] = static_cast<std::uint8_t>(std::lround((v + 1.0f) * 127.5f));
  }
  return img;
}

void write_ppm(const std::string& path, const ToyImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("write_ppm: cannot open " + path);
  }
  out << "P6\n" << image.res << ' ' << image.res << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) {
    throw std::runtime_error("write_ppm: write failed for " + path);
  }
}

void save_dataset(const std::string& dir,
                  const std::vector<std::pair<ToyCaption, ToyImage>>& items) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05zu.ppm", i);
    write_ppm((std::filesystem::path(dir) / name).string(), items[i].second);
    index.push_back({{"file", name}, {"caption", items[i].first.text()}});
  }
  std::ofstream out(std::filesystem::path(dir) / "index.json");
  out << index.dump(2) << '\n';
}

ToyTextEncoder ToyTextEncoder::init(RandomSource& rng, int d_t) {
  ToyTextEncoder enc;
  // Wide init. Pretrained sentence encoders hand over embeddings with norms
  // in the tens; the scale matters because the matching-aware gradient
  // penalty caps the discriminator's slope near one. Captions must sit far
  // enough apart that a matched/mismatched score gap of two fits under that
  // slope cap, otherwise the discriminator never learns caption matching and
  // the generator never receives a conditioning signal.
  float bound = 32.0f / std::sqrt(static_cast<float>(d_t));
  enc.table = rng.uniform_tensor({kVocabSize, d_t}, -bound, bound);
  enc.table.set_requires_grad(true);
  return enc;
}

void ToyTextEncoder::register_params(ParamSet& ps) const { ps.add("embed", table); }

TextFeatures ToyTextEncoder::encode(const ToyCaption& caption) const {
  std::vector<int> ids(caption.tokens.begin(), caption.tokens.end());
  TextFeatures tf;
  tf.words = embed_rows(table, ids);
  std::vector<int> live;
  for (int i = 0; i < kCaptionLen; ++i) {
    if (caption.tokens[static_cast<std::size_t>(i)] != kPadToken) live.push_back(i);
  }
  if (live.empty()) {
    throw std::invalid_argument("encode: caption is all padding");
  }
  Tensor nonpad = gather_rows(tf.words, live);
  tf.sentence = reshape(mean(nonpad, 0), {table.dim(1)});
  return tf;
}

}  // namespace dsegan
