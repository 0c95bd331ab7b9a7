#ifndef ASABF_WAV_HPP_
#define ASABF_WAV_HPP_

#include <string>

#include "asabf/dsp.hpp"

namespace asabf {
namespace wav {

// Reads a RIFF WAV file; accepts IEEE float32 and PCM16, any channel count.
AudioBuffer read(const std::string& path);

// Writes IEEE float32 WAV (interleaved).
void write(const std::string& path, const AudioBuffer& audio);

}  // namespace wav
}  // namespace asabf

#endif  // ASABF_WAV_HPP_
