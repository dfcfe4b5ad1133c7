#include "sgm/manifest.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sgm {

namespace {

std::string derive_name(const SequenceDescriptor& desc, std::size_t index) {
    if (!desc.frame_paths.empty()) {
        auto parent = desc.frame_paths.front().parent_path().filename().string();
        if (!parent.empty()) return parent;
    }
    return "seq" + std::to_string(index);
}

void finish_block(std::vector<SequenceDescriptor>& out, SequenceDescriptor& desc,
                  const std::filesystem::path& manifest) {
    if (desc.frame_paths.empty() && desc.ref_index < 0 && desc.gt_path.empty())
        return;  // stray blank lines
    if (desc.frame_paths.empty())
        throw std::runtime_error("manifest: sequence block without frames in " +
                                 manifest.string());
    if (desc.ref_index < 0)
        throw std::runtime_error("manifest: missing ref line in " +
                                 manifest.string());
    if (desc.ref_index >= static_cast<int>(desc.frame_paths.size()))
        throw std::runtime_error("manifest: ref index out of range in " +
                                 manifest.string());
    for (const auto& p : desc.frame_paths)
        if (!std::filesystem::exists(p))
            throw std::runtime_error("manifest: dangling frame path " + p.string());
    if (!desc.gt_path.empty() && !std::filesystem::exists(desc.gt_path))
        throw std::runtime_error("manifest: dangling gt path " +
                                 desc.gt_path.string());
    desc.name = derive_name(desc, out.size());
    out.push_back(std::move(desc));
    desc = SequenceDescriptor{};
}

}  // namespace

std::vector<SequenceDescriptor> manifest_load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
    const std::filesystem::path base = path.parent_path();

    std::vector<SequenceDescriptor> out;
    SequenceDescriptor desc;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) {
            finish_block(out, desc, path);
            continue;
        }
        if (key == "frame") {
            std::string p;
            double t;
            if (!(ls >> p >> t))
                throw std::runtime_error("manifest: malformed frame line: " + line);
            if (!(t > 0))
                throw std::runtime_error("manifest: nonpositive exposure in: " +
                                         line);
            desc.frame_paths.push_back(base / p);
            desc.exposures.push_back(t);
        } else if (key == "ref") {
            if (!(ls >> desc.ref_index))
                throw std::runtime_error("manifest: malformed ref line: " + line);
        } else if (key == "gt") {
            std::string p;
            if (!(ls >> p))
                throw std::runtime_error("manifest: malformed gt line: " + line);
            desc.gt_path = base / p;
        } else {
            throw std::runtime_error("manifest: unknown line key '" + key + "'");
        }
    }
    finish_block(out, desc, path);
    return out;
}

void manifest_save(const std::filesystem::path& path,
                   const std::vector<SequenceDescriptor>& sequences) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path.string());
    const std::filesystem::path base = path.parent_path();
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const auto& s = sequences[i];
        if (i) out << "\n";
        for (std::size_t n = 0; n < s.frame_paths.size(); ++n)
            out << "frame "
                << std::filesystem::relative(s.frame_paths[n], base).generic_string()
                << " " << s.exposures[n] << "\n";
        out << "ref " << s.ref_index << "\n";
        if (!s.gt_path.empty())
            out << "gt "
                << std::filesystem::relative(s.gt_path, base).generic_string()
                << "\n";
    }
}

}  // namespace sgm
