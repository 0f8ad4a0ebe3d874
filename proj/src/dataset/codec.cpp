#include "devstab/codec.hpp"

#include "devstab/error.hpp"

#include <openssl/evp.h>
#include <png.h>
#include <zlib.h>

#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

namespace devstab {

namespace {

// ---------------------------------------------------------------------------
// JPEG (libjpeg-turbo). Errors unwind through longjmp back into the calling
// frame; nothing with a non-trivial destructor is created between setjmp and
// the libjpeg calls that may jump.

struct JpegErrorManager {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

[[noreturn]] void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

void jpeg_silent_output(j_common_ptr) {}

std::vector<std::uint8_t> encode_jpeg(const ImageTensor& img, int quality) {
    if (quality < 1 || quality > 100) {
        throw InvalidArgument("jpeg quality must be in 1..100, got " + std::to_string(quality));
    }
    const std::vector<std::uint8_t> rgb = to_bytes(img);
    std::vector<std::uint8_t> result;

    jpeg_compress_struct cinfo{};
    JpegErrorManager jerr{};
    unsigned char* buffer = nullptr;
    unsigned long size = 0;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    jerr.pub.output_message = jpeg_silent_output;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        std::free(buffer);
        throw Error(std::string("jpeg encode failed: ") + jerr.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &buffer, &size);
    cinfo.image_width = static_cast<JDIMENSION>(img.width());
    cinfo.image_height = static_cast<JDIMENSION>(img.height());
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    cinfo.dct_method = JDCT_ISLOW;
    const int luma_factor = quality < 90 ? 2 : 1;
    cinfo.comp_info[0].h_samp_factor = luma_factor;
    cinfo.comp_info[0].v_samp_factor = luma_factor;
    for (int c = 1; c < 3; ++c) {
        cinfo.comp_info[c].h_samp_factor = 1;
        cinfo.comp_info[c].v_samp_factor = 1;
    }
    jpeg_start_compress(&cinfo, TRUE);
    const std::size_t stride = static_cast<std::size_t>(img.width()) * 3;
    while (cinfo.next_scanline < cinfo.image_height) {
        auto* row = const_cast<JSAMPLE*>(rgb.data() + cinfo.next_scanline * stride);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    result.assign(buffer, buffer + size);
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    return result;
}

ImageTensor decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    JpegErrorManager jerr{};
    std::vector<std::uint8_t> rgb;
    // Written between setjmp and a possible longjmp.
    volatile int width = 0;
    volatile int height = 0;
    volatile bool unsupported = false;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    jerr.pub.output_message = jpeg_silent_output;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError(std::string("corrupt jpeg stream: ") + jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    switch (cinfo.jpeg_color_space) {
        case JCS_GRAYSCALE:
        case JCS_YCbCr:
        case JCS_RGB:
            break;
        default:
            unsupported = true;
    }
    if (!unsupported) {
        cinfo.out_color_space = JCS_RGB;
        cinfo.dct_method = JDCT_ISLOW;
        jpeg_start_decompress(&cinfo);
        width = static_cast<int>(cinfo.output_width);
        height = static_cast<int>(cinfo.output_height);
        rgb.resize(static_cast<std::size_t>(width) * height * 3);
        while (cinfo.output_scanline < cinfo.output_height) {
            JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * cinfo.output_width * 3;
            jpeg_read_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_decompress(&cinfo);
    }
    const long warnings = jerr.pub.num_warnings;
    jpeg_destroy_decompress(&cinfo);
    if (unsupported) throw UnsupportedFormat("jpeg color model is neither RGB, YCbCr nor grayscale");
    // libjpeg pads a truncated stream with gray and only warns; treat that as corruption.
    if (warnings > 0) throw DecodeError("corrupt jpeg stream: decoder reported " + std::to_string(warnings) +
                                        " warning(s), likely truncated data");
    return from_bytes(height, width, rgb);
}

// ---------------------------------------------------------------------------
// PNG

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], std::span<const std::uint8_t> data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + data.size()));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img, int level) {
    if (level < 0 || level > 9) throw InvalidArgument("png compression level must be in 0..9");
    const std::vector<std::uint8_t> rgb = to_bytes(img);
    const std::size_t stride = static_cast<std::size_t>(img.width()) * 3;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * img.height());
    for (int y = 0; y < img.height(); ++y) {
        raw.push_back(0); // filter: none
        raw.insert(raw.end(), rgb.begin() + y * stride, rgb.begin() + (y + 1) * stride);
    }
    uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> packed(packed_size);
    if (compress2(packed.data(), &packed_size, raw.data(), static_cast<uLong>(raw.size()), level) != Z_OK) {
        throw Error("png encode: zlib compression failed");
    }
    packed.resize(packed_size);

    std::vector<std::uint8_t> out(std::begin(kPngSignature), std::end(kPngSignature));
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(img.width()));
    put_be32(ihdr, static_cast<std::uint32_t>(img.height()));
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0}); // 8-bit truecolor, deflate, adaptive filtering, no interlace
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", packed);
    put_chunk(out, "IEND", {});
    return out;
}

ImageTensor decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 33 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
        throw DecodeError("corrupt png stream: missing IHDR");
    }
    const int bit_depth = bytes[24];
    const int color_type = bytes[25];
    if (bit_depth == 16) throw UnsupportedFormat("16-bit png is not supported");
    if (color_type == 4 || color_type == 6) throw UnsupportedFormat("png with alpha channel is not supported");

    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw DecodeError(std::string("corrupt png stream: ") + image.message);
    }
    if (image.format & PNG_FORMAT_FLAG_ALPHA) {
        png_image_free(&image);
        throw UnsupportedFormat("png with transparency is not supported");
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw DecodeError("corrupt png stream: " + msg);
    }
    const int width = static_cast<int>(image.width);
    const int height = static_cast<int>(image.height);
    png_image_free(&image);
    return from_bytes(height, width, rgb);
}

bool looks_like_png(std::span<const std::uint8_t> b) {
    return b.size() >= 8 && std::memcmp(b.data(), kPngSignature, 8) == 0;
}

bool looks_like_jpeg(std::span<const std::uint8_t> b) {
    return b.size() >= 2 && b[0] == 0xFF && b[1] == 0xD8;
}

} // namespace

ImageTensor decode_image(std::span<const std::uint8_t> bytes, FormatHint hint) {
    const bool png = looks_like_png(bytes);
    const bool jpeg = looks_like_jpeg(bytes);
    if (hint == FormatHint::png && !png) throw DecodeError("stream is not a png");
    if (hint == FormatHint::jpeg && !jpeg) throw DecodeError("stream is not a jpeg");
    if (png) return decode_png(bytes);
    if (jpeg) return decode_jpeg(bytes);
    throw DecodeError("unrecognised image stream (neither png nor jpeg)");
}

std::vector<std::uint8_t> encode_image(const ImageTensor& img, const ImageFormat& format) {
    if (img.empty()) throw InvalidArgument("cannot encode an empty image");
    if (const auto* j = std::get_if<JpegFormat>(&format)) return encode_jpeg(img, j->quality);
    return encode_png(img, std::get<PngFormat>(format).compression_level);
}

ImageTensor jpeg_roundtrip(const ImageTensor& img, int quality) {
    return decode_jpeg(encode_jpeg(img, quality));
}

ImageTensor png_roundtrip(const ImageTensor& img) {
    return decode_png(encode_png(img, 6));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

ImageTensor load_image(const std::string& path) {
    try {
        return decode_image(read_file(path));
    } catch (const DecodeError& e) {
        throw DecodeError(path + ": " + e.what());
    }
}

std::string to_hex(const Digest128& digest) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(32);
    for (std::uint8_t b : digest) {
        s.push_back(kHex[b >> 4]);
        s.push_back(kHex[b & 0xF]);
    }
    return s;
}

Digest128 md5(std::span<const std::uint8_t> bytes) {
    Digest128 out{};
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_md5(), nullptr) || len != out.size()) {
        throw Error("md5 digest failed");
    }
    return out;
}

Digest128 decode_fingerprint(std::span<const std::uint8_t> bytes) {
    return pixel_fingerprint(decode_image(bytes));
}

Digest128 pixel_fingerprint(const ImageTensor& img) {
    return md5(to_bytes(img));
}

} // namespace devstab
