#pragma once

#include <string>

#include "tensor.hpp"

namespace dlove {

// Loads an 8-bit grayscale or RGB PNG into a [0,1] tensor (value / 255).
// Palette images are expanded to RGB and alpha channels are stripped.
// target_channels selects the output layout: 1 (Rec.601 luma), 3
// (grayscale replicated), or 0 to keep the stored layout.
// Throws IoError if the file cannot be read, FormatError if it is not a
// well-formed PNG, and UnsupportedError for 16-bit depth.
Image load_image(const std::string& path, int target_channels = 0);

// Channel conversion used by load_image, exposed for datasets built from
// in-memory tensors. target_channels must be 1 or 3.
Image convert_channels(const Image& img, int target_channels);

// Writes an image as an 8-bit PNG, quantizing with round(v * 255).
// Channels must be 1 (grayscale) or 3 (RGB). Throws IoError on write
// failure and InvalidArgument if the tensor is not a valid image.
void save_image(const Image& img, const std::string& path);

} // namespace dlove
