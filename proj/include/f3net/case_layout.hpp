#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "f3net/volume.hpp"

namespace f3net {

/// Files of one case directory `{case_id}/{case_id}_{suffix}.nii.gz`.
struct CaseFiles {
  std::string case_id;
  std::filesystem::path dir;
  std::map<Modality, std::filesystem::path> modalities;
  std::optional<std::filesystem::path> seg;
  std::optional<std::filesystem::path> wmh;
};

/// Throws LayoutError when the directory is missing or holds no modality file.
CaseFiles scan_case_dir(const std::filesystem::path& dir);

/// Label of a case: merge_whole(seg, wmh) when both exist, otherwise whichever
/// exists. Throws CorruptFile, GeometryMismatch.
std::optional<SegMask> load_label(const CaseFiles& files);

/// Reads the available modalities, synthesizes zero-images, normalizes the
/// present slots and attaches load_label.
/// When F3NET_CACHE names a directory the preprocessed case is cached there.
/// Throws LayoutError, GeometryMismatch, CorruptFile.
MultiModalCase load_case(const std::filesystem::path& dir);

/// Same, without intensity normalization or caching.
MultiModalCase load_raw_case(const std::filesystem::path& dir);

/// Sorted case directories under root; root itself when it is a case directory.
/// Throws LayoutError when none is found.
std::vector<std::filesystem::path> list_case_dirs(const std::filesystem::path& root);

std::vector<MultiModalCase> load_dataset(const std::filesystem::path& root);

/// Writes the present modalities and the label (if any) under dir/{case_id}/.
/// Returns the case directory.
std::filesystem::path write_case(const std::filesystem::path& root, const MultiModalCase& c);

}  // namespace f3net
