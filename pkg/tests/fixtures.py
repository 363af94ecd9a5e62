"""Per-disease F1 columns of the published comorbidity results (intuitive task), 16 diseases."""

SPARSE_F1 = [.787, .585, .561, .715, .856, .485, .678, .871, .782, .662, .748, .466, .542, .798, .564, .694]
SVD_F1 = [.870, .596, .573, .725, .617, .499, .732, .882, .790, .728, .591, .454, .592, .853, .576, .700]
LEARNED_F1 = [.915, .596, .561, .777, .913, .533, .653, .919, .866, .847, .621, .510, .615, .872, .582, .665]

AVERAGES = {"sparse": 0.675, "svd": 0.674, "learned": 0.715}

# 4 patients x 3 codes; per-code F1 = 1/2, 2/3, 1 -> macro 13/18
ML_GOLD = [[1, 0, 1], [1, 1, 0], [0, 1, 0], [0, 0, 1]]
ML_PRED = [[1, 1, 1], [0, 1, 0], [0, 1, 0], [1, 1, 1]]
ML_MACRO = 13 / 18
