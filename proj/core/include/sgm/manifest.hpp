#pragma once

// Plain-text sequence manifests. One block per sequence, blocks
// separated by blank lines:
//
//   frame <path> <exposure_seconds>
//   ...
//   ref <index>
//   gt <path>          (optional)
//
// Paths are resolved relative to the manifest file. Images load lazily
// via load_sequence().

#include "sgm/data.hpp"
#include "sgm/image_io.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sgm {

struct SequenceDescriptor {
    std::string name;
    std::vector<std::filesystem::path> frame_paths;
    std::vector<double> exposures;
    int ref_index = -1;
    std::filesystem::path gt_path;  // empty when absent
};

std::vector<SequenceDescriptor> manifest_load(const std::filesystem::path& path);

void manifest_save(const std::filesystem::path& path,
                   const std::vector<SequenceDescriptor>& sequences);

template <class T>
ExposureSequence<T> load_sequence(const SequenceDescriptor& desc) {
    ExposureSequence<T> seq;
    for (const auto& p : desc.frame_paths)
        seq.frames.push_back(read_image(p).template cast<T>());
    for (double t : desc.exposures) seq.exposure_times.push_back(static_cast<T>(t));
    seq.ref_index = static_cast<std::size_t>(desc.ref_index);
    if (!desc.gt_path.empty())
        seq.hdr_gt = read_image(desc.gt_path).template cast<T>();
    seq.validate();
    return seq;
}

}  // namespace sgm
