#include <stdio.h>
#include <string.h>

#include "pmm.h"

static int check(PmmStatus status, const char *what) {
  if (status != PMM_STATUS_OK) {
    char msg[256];
    pmm_last_error_message(msg, sizeof msg);
    fprintf(stderr, "%s failed: %s\n", what, msg);
    return 1;
  }
  return 0;
}

int main(void) {
  PmmBitSplit split;
  if (check(pmm_split_bits(4, 4, &split), "split")) return 1;
  if (split.usable_permutations != 16) return 2;

  uint32_t map[3];
  if (check(pmm_bits_to_permutation(3, 3, map), "unrank")) return 1;
  if (map[0] != 1 || map[1] != 2 || map[2] != 0) return 3;

  PmmChannel *ch = NULL;
  if (check(pmm_channel_draw(4, 4, 7, 0, 0, &ch), "draw")) return 1;
  double gamma[4] = {4.0, 3.0, 2.0, 1.0};
  double rate = 0.0;
  if (check(pmm_rate(ch, PMM_SCHEME_PMM, gamma, 4, 0, &rate), "rate")) return 1;
  pmm_channel_free(ch);
  if (!(rate > 0.0)) return 4;

  PmmFlops flops;
  if (check(pmm_flops(4, 4, 4, &flops), "flops")) return 1;
  if (flops.ml != 241664 || flops.zf != 680) return 5;

  if (pmm_bits_to_permutation(9, 3, map) != PMM_STATUS_OUT_OF_RANGE) return 6;
  char msg[64];
  if (pmm_last_error_message(msg, sizeof msg) == 0 || strlen(msg) == 0) return 7;

  printf("ok %s %.6f\n", pmm_version(), rate);
  return 0;
}
