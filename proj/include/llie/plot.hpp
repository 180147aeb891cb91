#pragma once

#include <filesystem>
#include <vector>

#include "llie/training.hpp"

namespace llie {

/// Parses a loss CSV written by the trainer.
std::vector<LossLog> read_loss_csv(const std::filesystem::path& path);

/// Line chart of every loss column against step on a shared linear axis.
/// Series colors: total black, appearance blue, enhancement green,
/// structure orange, generator purple, discriminator red.
void plot_loss_curves(const std::vector<LossLog>& logs, const std::filesystem::path& png, int width = 800,
                      int height = 480);

}  // namespace llie
