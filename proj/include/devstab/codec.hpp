#pragma once

#include "devstab/image.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace devstab {

enum class FormatHint { jpeg, png, automatic };

/// Baseline JPEG. Chroma is subsampled 4:2:0 below quality 90 and kept 4:4:4 at 90 and above.
struct JpegFormat {
    int quality = 85;
};

struct PngFormat {
    int compression_level = 6; ///< zlib level 0..9; does not affect pixels
};

using ImageFormat = std::variant<JpegFormat, PngFormat>;

/// Decode a JPEG or PNG stream into the canonical tensor (8-bit value v maps to v/255).
/// Throws DecodeError on corrupt or truncated streams and UnsupportedFormat for
/// 16-bit or alpha-bearing PNGs and non-RGB/gray JPEGs.
ImageTensor decode_image(std::span<const std::uint8_t> bytes, FormatHint hint = FormatHint::automatic);

std::vector<std::uint8_t> encode_image(const ImageTensor& img, const ImageFormat& format);

/// Convenience for the JPEG sweep: decode(encode(img, jpeg(quality))).
ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality);
ImageTensor png_roundtrip(const ImageTensor& img);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
ImageTensor load_image(const std::string& path);

using Digest128 = std::array<std::uint8_t, 16>;

std::string to_hex(const Digest128& digest);
Digest128 md5(std::span<const std::uint8_t> bytes);

/// MD5 of the decoded 8-bit RGB buffer (not of the file), so two decoders that
/// disagree on pixels produce different digests.
Digest128 decode_fingerprint(std::span<const std::uint8_t> bytes);
Digest128 pixel_fingerprint(const ImageTensor& img);

} // namespace devstab
