/* Test driver for exported networks: harness <input.csv> <output.csv>. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "nf_net.h"

static char line[1 << 16];

int main(int argc, char **argv)
{
    float in[NF_INPUT_DIM];
    float out[NF_OUTPUT_DIM];
    unsigned counts[NF_NUM_LAYERS];
    FILE *fin, *fout;
    unsigned long lineno = 0;
    int c;

    if (argc != 3) {
        fprintf(stderr, "usage: harness <input.csv> <output.csv>\n");
        return 2;
    }
    fin = fopen(argv[1], "r");
    if (!fin) {
        perror(argv[1]);
        return 1;
    }
    fout = fopen(argv[2], "w");
    if (!fout) {
        perror(argv[2]);
        return 1;
    }
    nf_init();
    while (fgets(line, sizeof line, fin)) {
        char *p = line;
        ++lineno;
        for (c = 0; c < NF_INPUT_DIM; ++c) {
            char *end;
            double v = strtod(p, &end);
            if (end == p) {
                fprintf(stderr, "line %lu: field %d is not a number\n", lineno, c + 1);
                return 1;
            }
            in[c] = (float)v;
            p = end;
            if (c + 1 < NF_INPUT_DIM) {
                if (*p != ',') {
                    fprintf(stderr, "line %lu: expected %d fields\n", lineno, NF_INPUT_DIM);
                    return 1;
                }
                ++p;
            }
        }
        if (*p != '\n' && *p != '\r' && *p != '\0') {
            fprintf(stderr, "line %lu: trailing data\n", lineno);
            return 1;
        }
        nf_step(in, out);
        nf_spike_counts(counts);
        for (c = 0; c < NF_OUTPUT_DIM; ++c)
            fprintf(fout, "%.17g,", (double)out[c]);
        for (c = 0; c < NF_NUM_LAYERS; ++c)
            fprintf(fout, c + 1 < NF_NUM_LAYERS ? "%u," : "%u\n", counts[c]);
    }
    fclose(fin);
    return fclose(fout) == 0 ? 0 : 1;
}
