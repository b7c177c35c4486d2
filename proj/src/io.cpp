#include "hablab/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "hablab/error.hpp"

namespace hablab {

namespace {

using nlohmann::json;

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct DtypeInfo {
    const char* name;
    int nifti;
    int bytes;
};

constexpr DtypeInfo kDtypes[] = {
    {"uint8", 2, 1},     {"int16", 4, 2},     {"int32", 8, 4},      {"float32", 16, 4}, {"float64", 64, 8},
    {"int8", 256, 1},    {"uint16", 512, 2},  {"uint32", 768, 4},   {"int64", 1024, 8}, {"uint64", 1280, 8},
};

const DtypeInfo& dtype_by_name(const std::string& name) {
    for (const auto& d : kDtypes)
        if (name == d.name) return d;
    fail(ErrorKind::data, "io", "unsupported-dtype", name);
}

const DtypeInfo& dtype_by_code(int code) {
    for (const auto& d : kDtypes)
        if (code == d.nifti) return d;
    fail(ErrorKind::data, "io", "unsupported-dtype", "NIfTI datatype " + std::to_string(code));
}

void swap_bytes(char* p, int n) {
    for (int i = 0; i < n / 2; ++i) std::swap(p[i], p[n - 1 - i]);
}

// Decodes little- or big-endian samples of the given type.
std::vector<double> decode(const char* buf, std::size_t count, const DtypeInfo& dt, bool swap) {
    std::vector<double> out(count);
    char tmp[8];
    for (std::size_t i = 0; i < count; ++i) {
        std::memcpy(tmp, buf + i * dt.bytes, dt.bytes);
        if (swap) swap_bytes(tmp, dt.bytes);
        switch (dt.nifti) {
            case 2: { std::uint8_t v; std::memcpy(&v, tmp, 1); out[i] = v; break; }
            case 4: { std::int16_t v; std::memcpy(&v, tmp, 2); out[i] = v; break; }
            case 8: { std::int32_t v; std::memcpy(&v, tmp, 4); out[i] = v; break; }
            case 16: { float v; std::memcpy(&v, tmp, 4); out[i] = v; break; }
            case 64: { double v; std::memcpy(&v, tmp, 8); out[i] = v; break; }
            case 256: { std::int8_t v; std::memcpy(&v, tmp, 1); out[i] = v; break; }
            case 512: { std::uint16_t v; std::memcpy(&v, tmp, 2); out[i] = v; break; }
            case 768: { std::uint32_t v; std::memcpy(&v, tmp, 4); out[i] = v; break; }
            case 1024: { std::int64_t v; std::memcpy(&v, tmp, 8); out[i] = double(v); break; }
            case 1280: { std::uint64_t v; std::memcpy(&v, tmp, 8); out[i] = double(v); break; }
        }
    }
    return out;
}

template <typename T>
void put(std::string& out, std::size_t i, double v) {
    T x = static_cast<T>(v);
    char tmp[sizeof(T)];
    std::memcpy(tmp, &x, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) swap_bytes(tmp, sizeof(T));
    std::memcpy(&out[i * sizeof(T)], tmp, sizeof(T));
}

// Encodes as little-endian; integer types require integral in-range values.
std::string encode(const std::vector<double>& v, const DtypeInfo& dt) {
    std::string out(v.size() * dt.bytes, '\0');
    for (std::size_t i = 0; i < v.size(); ++i) {
        double x = v[i];
        if (dt.nifti != 16 && dt.nifti != 64 && x != std::round(x))
            fail(ErrorKind::data, "io", "non-integer-value", std::string("dtype ") + dt.name);
        switch (dt.nifti) {
            case 2: put<std::uint8_t>(out, i, x); break;
            case 4: put<std::int16_t>(out, i, x); break;
            case 8: put<std::int32_t>(out, i, x); break;
            case 16: put<float>(out, i, x); break;
            case 64: put<double>(out, i, x); break;
            case 256: put<std::int8_t>(out, i, x); break;
            case 512: put<std::uint16_t>(out, i, x); break;
            case 768: put<std::uint32_t>(out, i, x); break;
            case 1024: put<std::int64_t>(out, i, x); break;
            case 1280: put<std::uint64_t>(out, i, x); break;
        }
    }
    return out;
}

std::string read_all_gz(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) fail(ErrorKind::data, "io", "cannot-open", path);
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, std::size_t(n));
    bool bad = n < 0;
    gzclose(f);
    if (bad) fail(ErrorKind::data, "io", "read-failed", path);
    return out;
}

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::data, "io", "cannot-open", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_all(const std::string& path, const std::string& bytes, bool gz) {
    if (gz) {
        gzFile f = gzopen(path.c_str(), "wb6");
        if (!f) fail(ErrorKind::data, "io", "cannot-write", path);
        bool ok = bytes.empty() || gzwrite(f, bytes.data(), unsigned(bytes.size())) == int(bytes.size());
        ok = gzclose(f) == Z_OK && ok;
        if (!ok) fail(ErrorKind::data, "io", "write-failed", path);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::data, "io", "cannot-write", path);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) fail(ErrorKind::data, "io", "write-failed", path);
}

template <typename T>
T get(const std::string& h, std::size_t off, bool swap) {
    T v;
    char tmp[sizeof(T)];
    std::memcpy(tmp, h.data() + off, sizeof(T));
    if (swap) swap_bytes(tmp, sizeof(T));
    std::memcpy(&v, tmp, sizeof(T));
    return v;
}

template <typename T>
void set(std::string& h, std::size_t off, T v) {
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) swap_bytes(tmp, sizeof(T));
    std::memcpy(&h[off], tmp, sizeof(T));
}

ImageData read_nifti(const std::string& path) {
    std::string bytes = read_all_gz(path);
    if (bytes.size() < 348) fail(ErrorKind::data, "io", "malformed-header", "file shorter than 348 bytes");
    bool swap = false;
    if (get<std::int32_t>(bytes, 0, false) != 348) {
        if (get<std::int32_t>(bytes, 0, true) != 348) fail(ErrorKind::data, "io", "malformed-header", "sizeof_hdr != 348");
        swap = true;
    }
    if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0)
        fail(ErrorKind::data, "io", "malformed-header", "magic is not n+1 (single-file NIfTI-1 required)");
    std::int16_t dim[8];
    for (int k = 0; k < 8; ++k) dim[k] = get<std::int16_t>(bytes, 40 + 2 * k, swap);
    if (dim[0] < 1 || dim[0] > 7) fail(ErrorKind::data, "io", "malformed-header", "dim[0] out of range");
    for (int k = 5; k <= dim[0]; ++k)
        if (dim[k] != 1) fail(ErrorKind::data, "io", "malformed-header", "more than 4 dimensions");
    ImageData img;
    img.format = "nifti";
    for (int k = 0; k < 3; ++k) img.geo.dims[k] = k + 1 <= dim[0] ? dim[k + 1] : 1;
    img.frames = dim[0] >= 4 ? dim[4] : 1;
    for (int k = 0; k < 3; ++k)
        if (img.geo.dims[k] < 1) fail(ErrorKind::data, "io", "malformed-header", "non-positive dimension");
    if (img.frames < 1) fail(ErrorKind::data, "io", "malformed-header", "non-positive frame count");
    const DtypeInfo& dt = dtype_by_code(get<std::int16_t>(bytes, 70, swap));
    img.dtype = dt.name;
    float pix[8];
    for (int k = 0; k < 8; ++k) pix[k] = get<float>(bytes, 76 + 4 * k, swap);
    const std::uint8_t units = std::uint8_t(bytes[123]);
    double space = 1.0;
    switch (units & 0x07) {
        case 1: space = 1000.0; break;
        case 3: space = 0.001; break;
        default: break;
    }
    double time = 1.0;
    switch (units & 0x38) {
        case 16: time = 0.001; break;
        case 24: time = 1e-6; break;
        default: break;
    }
    for (int k = 0; k < 3; ++k) {
        double s = k + 1 <= dim[0] ? std::abs(double(pix[k + 1])) * space : 1.0;
        img.geo.spacing[k] = s > 0.0 ? s : 1.0;
    }
    if (img.frames > 1) img.dt = pix[4] > 0.0f ? double(pix[4]) * time : 1.0;
    img.orientation.qfac = pix[0] < 0.0f ? -1.0f : 1.0f;
    img.orientation.qform_code = get<std::int16_t>(bytes, 252, swap);
    img.orientation.sform_code = get<std::int16_t>(bytes, 254, swap);
    for (int k = 0; k < 6; ++k) img.orientation.quatern[k] = get<float>(bytes, 256 + 4 * k, swap);
    for (int k = 0; k < 12; ++k) img.orientation.srow[k] = get<float>(bytes, 280 + 4 * k, swap);
    const double off = get<float>(bytes, 108, swap);
    if (!(off >= 348.0)) fail(ErrorKind::data, "io", "malformed-header", "vox_offset below 348");
    const std::size_t count = img.geo.size() * std::size_t(img.frames);
    const std::size_t start = std::size_t(off);
    if (bytes.size() < start + count * dt.bytes) fail(ErrorKind::data, "io", "truncated-data", path);
    img.data = decode(bytes.data() + start, count, dt, swap);
    float slope = get<float>(bytes, 112, swap), inter = get<float>(bytes, 116, swap);
    if (std::isfinite(slope) && slope != 0.0f && !(slope == 1.0f && inter == 0.0f))
        for (double& v : img.data) v = v * slope + inter;
    return img;
}

void write_nifti(const std::string& path, const ImageData& img) {
    const DtypeInfo& dt = dtype_by_name(img.dtype);
    std::string h(352, '\0');
    set<std::int32_t>(h, 0, 348);
    const bool series = img.frames > 1;
    std::int16_t dim[8] = {std::int16_t(series ? 4 : 3), std::int16_t(img.geo.dims[0]), std::int16_t(img.geo.dims[1]),
                           std::int16_t(img.geo.dims[2]), std::int16_t(series ? img.frames : 1), 1, 1, 1};
    for (int k = 0; k < 8; ++k) set<std::int16_t>(h, 40 + 2 * k, dim[k]);
    set<std::int16_t>(h, 70, std::int16_t(dt.nifti));
    set<std::int16_t>(h, 72, std::int16_t(dt.bytes * 8));
    float pix[8] = {img.orientation.qfac, float(img.geo.spacing[0]), float(img.geo.spacing[1]), float(img.geo.spacing[2]),
                    float(series ? img.dt : 0.0), 0, 0, 0};
    for (int k = 0; k < 8; ++k) set<float>(h, 76 + 4 * k, pix[k]);
    set<float>(h, 108, 352.0f);
    set<float>(h, 112, 1.0f);
    set<float>(h, 116, 0.0f);
    h[123] = char(2 | 8);  // mm, s
    set<std::int16_t>(h, 252, std::int16_t(img.orientation.qform_code));
    set<std::int16_t>(h, 254, std::int16_t(img.orientation.sform_code));
    for (int k = 0; k < 6; ++k) set<float>(h, 256 + 4 * k, img.orientation.quatern[k]);
    for (int k = 0; k < 12; ++k) set<float>(h, 280 + 4 * k, img.orientation.srow[k]);
    std::memcpy(&h[344], "n+1\0", 4);
    write_all(path, h + encode(img.data, dt), ends_with(path, ".gz"));
}

std::string raw_stem(const std::string& path) {
    for (const char* ext : {".raw", ".json"})
        if (ends_with(path, ext)) return path.substr(0, path.size() - std::strlen(ext));
    return path;
}

ImageData read_raw(const std::string& path) {
    const std::string stem = raw_stem(path);
    json side;
    try {
        side = json::parse(read_all(stem + ".json"));
    } catch (const json::exception& e) {
        fail(ErrorKind::data, "io", "malformed-sidecar", e.what());
    }
    ImageData img;
    img.format = "raw";
    try {
        if (side.at("format").get<std::string>() != "hablab-raw") fail(ErrorKind::data, "io", "malformed-sidecar", "format");
        if (side.at("byte_order").get<std::string>() != "little") fail(ErrorKind::data, "io", "malformed-sidecar", "byte_order");
        if (side.at("order").get<std::string>() != "x-fastest") fail(ErrorKind::data, "io", "malformed-sidecar", "order");
        auto dims = side.at("dims").get<std::vector<int>>();
        auto spacing = side.at("spacing").get<std::vector<double>>();
        if (dims.size() != 3 || spacing.size() != 3) fail(ErrorKind::data, "io", "malformed-sidecar", "dims/spacing need 3 entries");
        for (int k = 0; k < 3; ++k) {
            img.geo.dims[k] = dims[k];
            img.geo.spacing[k] = spacing[k];
        }
        img.frames = side.value("frames", 1);
        img.dt = side.value("dt", 1.0);
        img.dtype = side.at("dtype").get<std::string>();
    } catch (const json::exception& e) {
        fail(ErrorKind::data, "io", "malformed-sidecar", e.what());
    }
    img.geo.validate();
    if (img.frames < 1) fail(ErrorKind::data, "io", "malformed-sidecar", "frames");
    const DtypeInfo& dt = dtype_by_name(img.dtype);
    std::string bytes = read_all(stem + ".raw");
    const std::size_t count = img.geo.size() * std::size_t(img.frames);
    if (bytes.size() != count * dt.bytes)
        fail(ErrorKind::data, "io", "dim-mismatch",
             "raw file has " + std::to_string(bytes.size()) + " bytes, sidecar implies " + std::to_string(count * dt.bytes));
    img.data = decode(bytes.data(), count, dt, std::endian::native == std::endian::big);
    return img;
}

void write_raw(const std::string& path, const ImageData& img) {
    const std::string stem = raw_stem(path);
    const DtypeInfo& dt = dtype_by_name(img.dtype);
    json side = {{"format", "hablab-raw"},
                 {"version", 1},
                 {"dims", {img.geo.dims[0], img.geo.dims[1], img.geo.dims[2]}},
                 {"spacing", {img.geo.spacing[0], img.geo.spacing[1], img.geo.spacing[2]}},
                 {"frames", img.frames},
                 {"dt", img.dt},
                 {"dtype", dt.name},
                 {"byte_order", "little"},
                 {"order", "x-fastest"}};
    write_all(stem + ".raw", encode(img.data, dt), false);
    write_all(stem + ".json", side.dump(2) + "\n", false);
}

ImageData from_volume(const Geometry& g, std::vector<double> data, const std::string& path, const std::string& nifti_type) {
    ImageData img;
    img.geo = g;
    img.data = std::move(data);
    img.dtype = format_for_path(path) == VolumeFormat::nifti ? nifti_type : "float64";
    return img;
}

void require_single(const ImageData& img, const std::string& path) {
    if (img.frames != 1) fail(ErrorKind::data, "io", "unexpected-series", path);
}

}  // namespace

bool Orientation::identity() const { return qform_code == 0 && sform_code == 0; }

VolumeFormat format_for_path(const std::string& path) {
    return ends_with(path, ".nii") || ends_with(path, ".nii.gz") ? VolumeFormat::nifti : VolumeFormat::raw;
}

ImageData read_image(const std::string& path) {
    return format_for_path(path) == VolumeFormat::nifti ? read_nifti(path) : read_raw(path);
}

void write_image(const std::string& path, const ImageData& img) {
    img.geo.validate();
    if (img.data.size() != img.geo.size() * std::size_t(img.frames)) fail(ErrorKind::usage, "io", "data-size-mismatch");
    if (format_for_path(path) == VolumeFormat::nifti) {
        write_nifti(path, img);
    } else {
        write_raw(path, img);
    }
}

Volume read_volume(const std::string& path) {
    ImageData img = read_image(path);
    require_single(img, path);
    Volume v(img.geo);
    v.data = std::move(img.data);
    return v;
}

Mask read_mask(const std::string& path) {
    Volume v = read_volume(path);
    Mask m(v.geo);
    for (std::size_t i = 0; i < v.size(); ++i) m.data[i] = v.data[i] != 0.0;
    return m;
}

LabelMap read_labels(const std::string& path) {
    Volume v = read_volume(path);
    LabelMap l(v.geo);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v.data[i] != std::round(v.data[i])) fail(ErrorKind::data, "io", "non-integer-label", path);
        l.data[i] = int(v.data[i]);
    }
    return l;
}

VolumeSeries read_series(const std::string& path) {
    ImageData img = read_image(path);
    VolumeSeries s(img.geo, img.frames, img.dt);
    s.data = std::move(img.data);
    return s;
}

void write_volume(const std::string& path, const Volume& v) {
    write_image(path, from_volume(v.geo, v.data, path, "float32"));
}

void write_mask(const std::string& path, const Mask& m) {
    write_image(path, from_volume(m.geo, std::vector<double>(m.data.begin(), m.data.end()), path, "uint8"));
}

void write_labels(const std::string& path, const LabelMap& l) {
    write_image(path, from_volume(l.geo, std::vector<double>(l.data.begin(), l.data.end()), path, "int32"));
}

void write_series(const std::string& path, const VolumeSeries& s) {
    ImageData img = from_volume(s.geo, s.data, path, "float32");
    img.frames = s.frames;
    img.dt = s.dt;
    write_image(path, img);
}

}  // namespace hablab
