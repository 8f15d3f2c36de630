#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dsegan/adam.hpp"
#include "dsegan/dse.hpp"
#include "dsegan/random.hpp"
#include "dsegan/tensor.hpp"

namespace dsegan {

// Caption grammar: one color, one shape, one size, one position plus filler
// words, padded to 8 tokens. 6*4*2*5 = 240 distinct captions.

inline constexpr int kCaptionLen = 8;
inline constexpr int kVocabSize = 21;
inline constexpr int kPadToken = 0;

extern const std::array<const char*, kVocabSize> kVocab;

// Token id ranges per category.
inline constexpr int kColorFirst = 4, kColorCount = 6;
inline constexpr int kShapeFirst = 10, kShapeCount = 4;
inline constexpr int kSizeFirst = 14, kSizeCount = 2;
inline constexpr int kPositionFirst = 16, kPositionCount = 5;

struct ToyCaption {
  std::array<int, kCaptionLen> tokens{};

  int color() const;
  int shape() const;
  int size_token() const;
  int position() const;
  std::string text() const;
};

// Token ids must fall in the matching category ranges.
ToyCaption make_caption(int color, int shape, int size, int position);

// Whitespace-split words to token ids; throws on unknown words or captions
// that do not carry exactly one token per category.
ToyCaption parse_caption(const std::string& text);

// All 240 captions in a fixed order (color-major).
std::vector<ToyCaption> all_captions();

struct ToyImage {
  int res = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  std::uint8_t at(int x, int y, int c) const {
    return rgb[static_cast<std::size_t>((y * res + x) * 3 + c)];
  }
};

// Deterministic rasterization: the captioned shape in its color and size,
// centered in its region, on dark-gray background, no anti-aliasing.
ToyImage render(const ToyCaption& caption, int resolution);

std::vector<std::pair<ToyCaption, ToyImage>> sample_dataset(std::uint64_t seed, int n,
                                                            int resolution);

struct AttributeReport {
  bool color_ok = false;
  bool position_ok = false;
};

// Dominant non-background color cluster vs the commanded color (RGB distance
// 60) and its centroid vs the commanded region.
AttributeReport attribute_accuracy(const ToyImage& image, const ToyCaption& caption);

// [res^2 x 3] in [-1, 1] and back (values clamped, then rounded).
Tensor image_to_tensor(const ToyImage& image);
ToyImage tensor_to_image(const Tensor& t);

void write_ppm(const std::string& path, const ToyImage& image);
void save_dataset(const std::string& dir,
                  const std::vector<std::pair<ToyCaption, ToyImage>>& items);

// Learnable embedding table standing in for a pretrained text encoder.
// Word features keep PAD rows; the sentence feature averages non-PAD rows.
struct ToyTextEncoder {
  Tensor table;  // [kVocabSize x d_t]

  static ToyTextEncoder init(RandomSource& rng, int d_t);
  void register_params(ParamSet& ps) const;
  TextFeatures encode(const ToyCaption& caption) const;
};

}  // namespace dsegan
