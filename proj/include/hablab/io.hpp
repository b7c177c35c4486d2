#pragma once

#include <array>
#include <string>

#include "hablab/volume.hpp"

namespace hablab {

// Orientation fields carried through from a NIfTI header; not used for computation.
struct Orientation {
    int qform_code = 0, sform_code = 0;
    std::array<float, 6> quatern{0, 0, 0, 0, 0, 0};  // b, c, d, qoffset x, y, z
    std::array<float, 12> srow{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    float qfac = 1.0f;
    bool identity() const;
};

struct ImageData {
    Geometry geo;
    int frames = 1;
    double dt = 1.0;
    std::vector<double> data;  // x fastest, then y, z, t
    Orientation orientation;
    std::string format;        // "nifti" or "raw"
    // Storage type on write: uint8, int16, int32, float32 or float64.
    std::string dtype = "float64";
};

enum class VolumeFormat { nifti, raw };

// .nii and .nii.gz are NIfTI-1; anything else is the raw format: <stem>.raw plus <stem>.json sidecar.
VolumeFormat format_for_path(const std::string& path);

ImageData read_image(const std::string& path);
void write_image(const std::string& path, const ImageData& img);

Volume read_volume(const std::string& path);
Mask read_mask(const std::string& path);
LabelMap read_labels(const std::string& path);
VolumeSeries read_series(const std::string& path);

void write_volume(const std::string& path, const Volume& v);
void write_mask(const std::string& path, const Mask& m);
void write_labels(const std::string& path, const LabelMap& l);
void write_series(const std::string& path, const VolumeSeries& s);

}  // namespace hablab
