#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

namespace misbayes::svg {

using NamedSamples = std::vector<std::pair<std::string, Eigen::VectorXd>>;

// Kernel density overlay of one or more sample sets (Silverman bandwidth);
// degenerate constant samples fall back to a point marker.
void write_density_overlay(const std::string& path, const NamedSamples& groups,
                           const std::string& title);

// Violin summary: kernel silhouette plus quartile ticks per group.
void write_violin(const std::string& path, const NamedSamples& groups,
                  const std::string& title);

}  // namespace misbayes::svg
