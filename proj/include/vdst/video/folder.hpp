#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vdst/core/error.hpp"
#include "vdst/io/image.hpp"
#include "vdst/video/types.hpp"

namespace vdst {

// Loads a dataset laid out as <root>/<class_name>/<clip_name>/<frame files>.
// Classes and clips are taken in lexicographic order (stable label
// assignment); frames within a clip are sorted by filename. The frame
// decoder is pluggable — the default reads binary PGM/PPM.
template <class S>
using FrameDecoder = std::function<Tensor<S>(const std::string& path)>;

template <class S>
FrameDecoder<S> pnm_decoder() {
  return [](const std::string& path) { return read_pnm<S>(path); };
}

template <class S>
VideoDataset<S> load_folder_dataset(const std::string& root,
                                    FrameDecoder<S> decode = pnm_decoder<S>()) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw IoError("load_folder_dataset: not a directory: " + root);

  std::vector<std::string> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  require_input(!class_dirs.empty(),
                "load_folder_dataset: no class directories under " + root);

  VideoDataset<S> ds;
  ds.num_classes = static_cast<int>(class_dirs.size());
  ds.class_names = class_dirs;

  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    const fs::path class_path = fs::path(root) / class_dirs[label];
    std::vector<std::string> clip_dirs;
    for (const auto& e : fs::directory_iterator(class_path))
      if (e.is_directory()) clip_dirs.push_back(e.path().filename().string());
    std::sort(clip_dirs.begin(), clip_dirs.end());
    require_input(!clip_dirs.empty(), "load_folder_dataset: class '" +
                                          class_dirs[label] + "' has no clips");

    for (const auto& clip_name : clip_dirs) {
      const fs::path clip_path = class_path / clip_name;
      std::vector<std::string> frame_files;
      for (const auto& e : fs::directory_iterator(clip_path))
        if (e.is_regular_file()) frame_files.push_back(e.path().string());
      std::sort(frame_files.begin(), frame_files.end());
      require_input(!frame_files.empty(), "load_folder_dataset: clip '" +
                                              clip_path.string() + "' has no frames");

      std::vector<Tensor<S>> frames;
      frames.reserve(frame_files.size());
      for (const auto& f : frame_files) {
        Tensor<S> img = decode(f);
        require_input(img.rank() == 3, "load_folder_dataset: decoder must "
                                       "return [C,H,W] for " + f);
        if (!frames.empty())
          require_input(img.shape() == frames[0].shape(),
                        "load_folder_dataset: frame shapes disagree in " +
                            clip_path.string());
        frames.push_back(std::move(img));
      }

      VideoClip<S> clip;
      clip.label = static_cast<int>(label);
      const Shape& fshape = frames[0].shape();
      clip.frames = Tensor<S>({static_cast<Index>(frames.size()), fshape[0],
                               fshape[1], fshape[2]});
      const Index item = frames[0].size();
      for (std::size_t i = 0; i < frames.size(); ++i)
        std::copy(frames[i].data(), frames[i].data() + item,
                  clip.frames.data() + static_cast<Index>(i) * item);
      ds.clips.push_back(std::move(clip));
    }
  }
  ds.validate();
  return ds;
}

// Writes a dataset in the folder layout above (PGM for 1 channel, PPM for
// 3); the exact inverse of load_folder_dataset with the default decoder up
// to 8-bit quantization.
template <class S>
void save_folder_dataset(const VideoDataset<S>& ds, const std::string& root) {
  namespace fs = std::filesystem;
  ds.validate();
  require_input(!ds.class_names.empty(),
                "save_folder_dataset: dataset has no class names");
  std::vector<int> clip_counter(static_cast<std::size_t>(ds.num_classes), 0);
  for (const auto& clip : ds.clips) {
    const auto& cname = ds.class_names[static_cast<std::size_t>(clip.label)];
    char clip_name[32];
    std::snprintf(clip_name, sizeof(clip_name), "clip%04d",
                  clip_counter[static_cast<std::size_t>(clip.label)]++);
    const fs::path dir = fs::path(root) / cname / clip_name;
    fs::create_directories(dir);
    for (Index t = 0; t < clip.num_frames(); ++t) {
      Tensor<S> frame({clip.channels(), clip.height(), clip.width()});
      std::copy(clip.frames.data() + t * frame.size(),
                clip.frames.data() + (t + 1) * frame.size(), frame.data());
      char fname[32];
      std::snprintf(fname, sizeof(fname), "frame%04d.%s",
                    static_cast<int>(t), clip.channels() == 1 ? "pgm" : "ppm");
      write_pnm(
          (dir / fname).string(), frame);
    }
  }
}

}  // namespace vdst
