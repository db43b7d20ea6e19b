#ifndef MIXER_DATA_HPP_
#define MIXER_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mixer/error.hpp"

namespace mixer {

// Modality values double as class labels for the 2-way modality classifier.
enum class Modality : uint8_t { V = 0, I = 1 };

enum class Split : uint8_t { train = 0, test = 1 };

inline char modality_char(Modality m) { return m == Modality::V ? 'V' : 'I'; }

inline Modality modality_from_char(char c) {
  if (c == 'V') return Modality::V;
  if (c == 'I') return Modality::I;
  throw ParseError(std::string("modality: expected V or I, got '") + c + "'");
}

struct Sample {
  std::vector<double> features;
  int id = 0;
  Modality modality = Modality::V;
  int camera = 0;  // globally unique across modalities
  Split split = Split::train;
};

}  // namespace mixer

#endif  // MIXER_DATA_HPP_
