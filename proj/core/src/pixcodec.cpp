#include "grainpipe/pixcodec.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace grainpipe {

namespace {

using nlohmann::json;

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open payload file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const void* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw FormatError("cannot open payload file for writing: " + path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out)
        throw FormatError("short write to payload file: " + path.string());
}

} // namespace

void ImageCube::validate() const {
    if (height <= 0 || width <= 0 || channels <= 0)
        throw FormatError("cube dimensions must be positive");
    if (data.size() != value_count())
        throw FormatError("cube data size does not match dimensions");
}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (auto b : bits)
        n += b != 0;
    return n;
}

ImageCube crop(const ImageCube& cube, const BBox& box) {
    if (box.empty() || box.row0 < 0 || box.col0 < 0 || box.row1 >= cube.height ||
        box.col1 >= cube.width)
        throw GeometryError("crop box outside cube bounds");
    ImageCube out(box.rows(), box.cols(), cube.channels, cube.bit_depth, cube.modality,
                  cube.reflectance);
    for (int r = 0; r < out.height; ++r) {
        const double* src = &cube.data[cube.index(box.row0 + r, box.col0, 0)];
        double* dst = &out.data[out.index(r, 0, 0)];
        std::memcpy(dst, src, sizeof(double) * static_cast<std::size_t>(out.width) * out.channels);
    }
    return out;
}

std::string to_string(Modality m) { return m == Modality::RGB ? "RGB" : "HSI"; }

Modality modality_from_string(const std::string& s) {
    if (s == "RGB")
        return Modality::RGB;
    if (s == "HSI")
        return Modality::HSI;
    throw FormatError("unknown modality: " + s);
}

std::size_t mono12p_byte_size(std::size_t pixel_count) {
    return (pixel_count * 3 + 1) / 2;
}

Mono12pBuffer pack_mono12p(std::span<const std::uint16_t> values) {
    Mono12pBuffer buf;
    buf.pixel_count = values.size();
    buf.bytes.resize(mono12p_byte_size(values.size()));

    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] > 0x0FFF)
            throw ValueError("12-bit value out of range at index " + std::to_string(i) + ": " +
                             std::to_string(values[i]));
    }

    std::size_t out = 0;
    std::size_t i = 0;
    for (; i + 1 < values.size(); i += 2) {
        const std::uint16_t p0 = values[i];
        const std::uint16_t p1 = values[i + 1];
        buf.bytes[out++] = static_cast<std::uint8_t>(p0 & 0xFF);
        buf.bytes[out++] = static_cast<std::uint8_t>(((p0 >> 8) & 0x0F) | ((p1 & 0x0F) << 4));
        buf.bytes[out++] = static_cast<std::uint8_t>((p1 >> 4) & 0xFF);
    }
    if (i < values.size()) {
        const std::uint16_t p0 = values[i];
        buf.bytes[out++] = static_cast<std::uint8_t>(p0 & 0xFF);
        buf.bytes[out++] = static_cast<std::uint8_t>((p0 >> 8) & 0x0F);
    }
    return buf;
}

std::vector<std::uint16_t> unpack_mono12p(const Mono12pBuffer& buf) {
    if (buf.bytes.size() != mono12p_byte_size(buf.pixel_count))
        throw FormatError("mono12p buffer is " + std::to_string(buf.bytes.size()) +
                          " bytes; expected " + std::to_string(mono12p_byte_size(buf.pixel_count)) +
                          " for " + std::to_string(buf.pixel_count) + " pixels");

    std::vector<std::uint16_t> values(buf.pixel_count);
    std::size_t in = 0;
    std::size_t i = 0;
    for (; i + 1 < buf.pixel_count; i += 2) {
        const std::uint8_t b0 = buf.bytes[in++];
        const std::uint8_t b1 = buf.bytes[in++];
        const std::uint8_t b2 = buf.bytes[in++];
        values[i] = static_cast<std::uint16_t>(b0 | ((b1 & 0x0F) << 8));
        values[i + 1] = static_cast<std::uint16_t>(((b1 >> 4) & 0x0F) | (b2 << 4));
    }
    if (i < buf.pixel_count) {
        const std::uint8_t b0 = buf.bytes[in++];
        const std::uint8_t b1 = buf.bytes[in++];
        values[i] = static_cast<std::uint16_t>(b0 | ((b1 & 0x0F) << 8));
    }
    return values;
}

std::string to_string(Packing p) {
    switch (p) {
    case Packing::U8: return "u8";
    case Packing::U16: return "u16";
    case Packing::Mono12p: return "mono12p";
    case Packing::F32: return "f32";
    }
    throw FormatError("invalid packing");
}

Packing packing_from_string(const std::string& s) {
    if (s == "u8")
        return Packing::U8;
    if (s == "u16")
        return Packing::U16;
    if (s == "mono12p")
        return Packing::Mono12p;
    if (s == "f32")
        return Packing::F32;
    throw FormatError("unknown packing: " + s);
}

Packing default_packing(const ImageCube& cube) {
    if (cube.reflectance)
        return Packing::F32;
    if (cube.bit_depth == 12)
        return Packing::Mono12p;
    if (cube.bit_depth == 8)
        return Packing::U8;
    throw FormatError("unknown bit depth: " + std::to_string(cube.bit_depth));
}

void write_cube(const ImageCube& cube, const std::filesystem::path& header_path) {
    write_cube(cube, header_path, default_packing(cube));
}

void write_cube(const ImageCube& cube, const std::filesystem::path& header_path, Packing packing) {
    cube.validate();
    const std::size_t n = cube.value_count();

    std::filesystem::path payload_path = header_path;
    payload_path.replace_extension(".bin"); // <name>.cube.json -> <name>.cube.bin

    switch (packing) {
    case Packing::U8: {
        std::vector<std::uint8_t> raw(n);
        for (std::size_t i = 0; i < n; ++i)
            raw[i] = static_cast<std::uint8_t>(cube.data[i]);
        write_file_bytes(payload_path, raw.data(), raw.size());
        break;
    }
    case Packing::U16: {
        std::vector<std::uint16_t> raw(n);
        for (std::size_t i = 0; i < n; ++i)
            raw[i] = static_cast<std::uint16_t>(cube.data[i]);
        write_file_bytes(payload_path, raw.data(), raw.size() * 2);
        break;
    }
    case Packing::Mono12p: {
        std::vector<std::uint16_t> raw(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = cube.data[i];
            if (v < 0.0 || v > 4095.0 || v != std::floor(v))
                throw ValueError("value at flat index " + std::to_string(i) +
                                 " is not a 12-bit integer");
            raw[i] = static_cast<std::uint16_t>(v);
        }
        const Mono12pBuffer buf = pack_mono12p(raw);
        write_file_bytes(payload_path, buf.bytes.data(), buf.bytes.size());
        break;
    }
    case Packing::F32: {
        std::vector<float> raw(n);
        for (std::size_t i = 0; i < n; ++i)
            raw[i] = static_cast<float>(cube.data[i]);
        write_file_bytes(payload_path, raw.data(), raw.size() * 4);
        break;
    }
    }

    json header;
    header["height"] = cube.height;
    header["width"] = cube.width;
    header["channels"] = cube.channels;
    header["bit_depth"] = cube.bit_depth;
    header["modality"] = to_string(cube.modality);
    header["payload_file"] = payload_path.filename().string();
    header["packing"] = to_string(packing);
    if (cube.reflectance)
        header["reflectance"] = true;

    std::ofstream out(header_path, std::ios::trunc);
    if (!out)
        throw FormatError("cannot open cube header for writing: " + header_path.string());
    out << header.dump(2) << "\n";
}

ImageCube read_cube(const std::filesystem::path& header_path) {
    std::ifstream in(header_path);
    if (!in)
        throw FormatError("cannot open cube header: " + header_path.string());
    json header;
    try {
        in >> header;
    } catch (const json::exception& e) {
        throw FormatError("malformed cube header " + header_path.string() + ": " + e.what());
    }

    ImageCube cube;
    try {
        cube.height = header.at("height").get<int>();
        cube.width = header.at("width").get<int>();
        cube.channels = header.at("channels").get<int>();
        cube.bit_depth = header.at("bit_depth").get<int>();
        cube.modality = modality_from_string(header.at("modality").get<std::string>());
        cube.reflectance = header.value("reflectance", false);
    } catch (const json::exception& e) {
        throw FormatError("incomplete cube header " + header_path.string() + ": " + e.what());
    }
    if (cube.bit_depth != 8 && cube.bit_depth != 12)
        throw FormatError("unknown bit depth: " + std::to_string(cube.bit_depth));

    const Packing packing = packing_from_string(header.at("packing").get<std::string>());
    const std::filesystem::path payload_path =
        header_path.parent_path() / header.at("payload_file").get<std::string>();
    const std::vector<std::uint8_t> bytes = read_file_bytes(payload_path);

    if (cube.height <= 0 || cube.width <= 0 || cube.channels <= 0)
        throw FormatError("cube header declares non-positive dimensions");
    const std::size_t n =
        static_cast<std::size_t>(cube.height) * cube.width * cube.channels;
    cube.data.resize(n);

    switch (packing) {
    case Packing::U8: {
        if (bytes.size() != n)
            throw FormatError("payload size mismatch: got " + std::to_string(bytes.size()) +
                              " bytes, expected " + std::to_string(n));
        for (std::size_t i = 0; i < n; ++i)
            cube.data[i] = bytes[i];
        break;
    }
    case Packing::U16: {
        if (bytes.size() != n * 2)
            throw FormatError("payload size mismatch: got " + std::to_string(bytes.size()) +
                              " bytes, expected " + std::to_string(n * 2));
        for (std::size_t i = 0; i < n; ++i) {
            std::uint16_t v;
            std::memcpy(&v, bytes.data() + i * 2, 2);
            cube.data[i] = v;
        }
        break;
    }
    case Packing::Mono12p: {
        Mono12pBuffer buf;
        buf.pixel_count = n;
        if (bytes.size() != mono12p_byte_size(n))
            throw FormatError("payload size mismatch: got " + std::to_string(bytes.size()) +
                              " bytes, expected " + std::to_string(mono12p_byte_size(n)));
        buf.bytes = bytes;
        const auto values = unpack_mono12p(buf);
        for (std::size_t i = 0; i < n; ++i)
            cube.data[i] = values[i];
        break;
    }
    case Packing::F32: {
        if (bytes.size() != n * 4)
            throw FormatError("payload size mismatch: got " + std::to_string(bytes.size()) +
                              " bytes, expected " + std::to_string(n * 4));
        for (std::size_t i = 0; i < n; ++i) {
            float v;
            std::memcpy(&v, bytes.data() + i * 4, 4);
            cube.data[i] = v;
        }
        break;
    }
    }
    return cube;
}

} // namespace grainpipe
