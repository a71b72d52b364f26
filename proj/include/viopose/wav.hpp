#pragma once

#include <string>

#include "viopose/audio.hpp"

namespace viopose {

// Mono WAV. Writing uses IEEE float32 so round-trips are sample-exact at
// float32 precision; the reader also accepts 16-bit PCM.
void write_wav(const std::string& path, const AudioClip& clip);
AudioClip read_wav(const std::string& path);

}  // namespace viopose
