#pragma once

#include <filesystem>

#include <Eigen/Core>

#include "kinmo/motion.hpp"

namespace kinmo {

// KMOT: "KMOT", u32 version, u32 rows, u32 cols, then rows*cols little-endian
// float32 values in row-major order.
inline constexpr std::uint32_t kKmotVersion = 1;

void write_kmot(const std::filesystem::path& path, const Eigen::MatrixXd& data);
Eigen::MatrixXd read_kmot(const std::filesystem::path& path);

void save_motion(const std::filesystem::path& path, const MotionSequence& motion);
MotionSequence load_motion(const std::filesystem::path& path);

// 2-D little-endian float32/float64 NumPy array (C order).
Eigen::MatrixXd read_npy(const std::filesystem::path& path);
void write_npy(const std::filesystem::path& path, const Eigen::MatrixXd& data);

}  // namespace kinmo
