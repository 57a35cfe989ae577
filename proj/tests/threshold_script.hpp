#pragma once

// Fifty scripted batches and the hand-worked threshold trajectory after each one.
// Covers the 0.75 ceiling, the 0.25 floor, the lift back to 0.5 from below, and
// the single decrement when a batch pushes the streak past 5.
struct ScriptedBatch {
  int size;
  int invalid_at;  // -1: every run in the batch was valid
  double delta;
  int streak;
};

inline constexpr ScriptedBatch kThresholdScript[] = {
    {1, 0, 0.55, 0},
    {1, 0, 0.60, 0},
    {1, 0, 0.65, 0},
    {1, 0, 0.70, 0},
    {1, 0, 0.75, 0},
    {1, 0, 0.75, 0},
    {1, -1, 0.75, 1},
    {1, -1, 0.75, 2},
    {1, -1, 0.75, 3},
    {1, -1, 0.75, 4},
    {1, -1, 0.70, 0},
    {1, -1, 0.70, 1},
    {1, -1, 0.70, 2},
    {1, -1, 0.70, 3},
    {1, -1, 0.70, 4},
    {1, -1, 0.65, 0},
    {1, -1, 0.65, 1},
    {1, -1, 0.65, 2},
    {1, -1, 0.65, 3},
    {1, -1, 0.65, 4},
    {1, -1, 0.60, 0},
    {1, -1, 0.60, 1},
    {1, -1, 0.60, 2},
    {1, -1, 0.60, 3},
    {1, -1, 0.60, 4},
    {1, -1, 0.55, 0},
    {1, -1, 0.55, 1},
    {1, -1, 0.55, 2},
    {1, -1, 0.55, 3},
    {1, -1, 0.55, 4},
    {1, -1, 0.50, 0},
    {3, -1, 0.50, 3},
    {3, -1, 0.45, 1},
    {3, -1, 0.45, 4},
    {3, -1, 0.40, 2},
    {3, -1, 0.35, 0},
    {3, -1, 0.35, 3},
    {3, -1, 0.30, 1},
    {3, -1, 0.30, 4},
    {3, -1, 0.25, 2},
    {3, -1, 0.25, 0},
    {2, 1, 0.50, 0},
    {1, -1, 0.50, 1},
    {1, -1, 0.50, 2},
    {1, -1, 0.50, 3},
    {1, -1, 0.50, 4},
    {1, 0, 0.55, 0},
    {6, -1, 0.50, 1},
    {6, -1, 0.45, 2},
    {1, -1, 0.45, 3}};
